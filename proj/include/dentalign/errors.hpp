#pragma once

#include <stdexcept>
#include <string>

namespace dentalign {

// Exit-code categories used by the CLI: 2 = configuration, 3 = data,
// 4 = numerical. Anything else that escapes maps to 1.
class Error : public std::runtime_error {
public:
    Error(std::string msg, int exit_code)
        : std::runtime_error(std::move(msg)), exit_code_(exit_code) {}
    int exit_code() const { return exit_code_; }

private:
    int exit_code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg, 2) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg, const std::string& kind = "data error")
        : Error(kind + ": " + msg, 3) {}
};

class ShapeError : public DataError {
public:
    explicit ShapeError(const std::string& msg) : DataError(msg, "shape error") {}
};

class ContractError : public DataError {
public:
    explicit ContractError(const std::string& msg) : DataError(msg, "contract error") {}
};

class EmptyInputError : public DataError {
public:
    explicit EmptyInputError(const std::string& msg) : DataError(msg, "empty input") {}
};

class CardinalityError : public DataError {
public:
    explicit CardinalityError(const std::string& msg) : DataError(msg, "cardinality error") {}
};

class FormatError : public DataError {
public:
    explicit FormatError(const std::string& msg) : DataError(msg, "format error") {}
};

class GenerationError : public DataError {
public:
    explicit GenerationError(const std::string& msg) : DataError(msg, "generation error") {}
};

class DegenerateBatchError : public DataError {
public:
    explicit DegenerateBatchError(const std::string& msg)
        : DataError(msg, "degenerate batch") {}
};

class DegenerateTestError : public DataError {
public:
    explicit DegenerateTestError(const std::string& msg) : DataError(msg, "degenerate test") {}
};

class LabelError : public DataError {
public:
    explicit LabelError(const std::string& msg) : DataError(msg, "label error") {}
};

class CheckpointError : public DataError {
public:
    explicit CheckpointError(const std::string& msg) : DataError(msg, "checkpoint error") {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error("numerical error: " + msg, 4) {}
};

}  // namespace dentalign
