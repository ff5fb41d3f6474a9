#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dentalign/errors.hpp"

namespace dentalign {

// Label space: 0 background, 11-18 / 21-28 / 31-38 / 41-48 teeth (FDI),
// 99 metal artifact. 34 classes total.
namespace fdi {

constexpr std::uint16_t kBackground = 0;
constexpr std::uint16_t kMetal = 99;
constexpr int kNumClasses = 34;

inline bool is_tooth_code(int code) {
    const int q = code / 10, d = code % 10;
    return q >= 1 && q <= 4 && d >= 1 && d <= 8;
}

inline bool is_valid_label(int code) {
    return code == kBackground || code == kMetal || is_tooth_code(code);
}

inline std::vector<int> all_tooth_codes() {
    std::vector<int> codes;
    for (int q = 1; q <= 4; ++q)
        for (int d = 1; d <= 8; ++d) codes.push_back(q * 10 + d);
    return codes;
}

// Dense class index: 0 background, 1..32 teeth in code order, 33 metal.
inline int class_index(int code) {
    if (code == kBackground) return 0;
    if (code == kMetal) return 33;
    if (!is_tooth_code(code)) throw LabelError("invalid FDI code " + std::to_string(code));
    return (code / 10 - 1) * 8 + (code % 10);
}

inline int code_of_class(int idx) {
    if (idx == 0) return kBackground;
    if (idx == 33) return kMetal;
    if (idx < 1 || idx > 32) throw LabelError("invalid class index " + std::to_string(idx));
    return ((idx - 1) / 8 + 1) * 10 + ((idx - 1) % 8 + 1);
}

}  // namespace fdi

// Tooth groups T1..T8 pool the four same-position teeth across quadrants.
struct ToothGroup {
    int id;  // 1..8
    std::string name;
};

inline ToothGroup group_of(int code) {
    if (!fdi::is_tooth_code(code)) {
        throw LabelError("group_of requires a tooth code, got " + std::to_string(code));
    }
    static const std::array<const char*, 8> kNames = {
        "Central Incisor", "Lateral Incisor", "Cuspid",      "1st Premolar",
        "2nd Premolar",    "1st Molar",       "2nd Molar",   "3rd Molar"};
    const int d = code % 10;
    return ToothGroup{d, kNames[static_cast<std::size_t>(d - 1)]};
}

}  // namespace dentalign
