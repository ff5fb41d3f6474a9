#include <gtest/gtest.h>

#include <cmath>

#include "dentalign/optim.hpp"

using namespace dentalign;

TEST(AdamW, DecayOnlyStep) {
    NamedTensors params;
    params["w"] = ad::Tensor::scalar(1.0, true);
    NamedGrads grads;
    grads["w"] = ad::Tensor::scalar(0.0);
    OptimState st;
    st.cfg.weight_decay = 0.01;
    adamw_step(params, grads, st, 1e-3);
    EXPECT_DOUBLE_EQ(params["w"].data[0], 1.0 - 1e-3 * 0.01 * 1.0);  // 0.99999
}

TEST(AdamW, FirstStepIsSignedUnitStep) {
    // bias-corrected first step: update = -lr * g / (|g| + eps)
    for (double g0 : {0.35, -1.7}) {
        NamedTensors params;
        params["w"] = ad::Tensor::scalar(2.0, true);
        NamedGrads grads;
        grads["w"] = ad::Tensor::scalar(g0);
        OptimState st;
        st.cfg.weight_decay = 0.0;
        adamw_step(params, grads, st, 1e-2);
        const double expect = 2.0 - 1e-2 * g0 / (std::abs(g0) + st.cfg.eps);
        EXPECT_NEAR(params["w"].data[0], expect, 1e-12);
    }
}

TEST(AdamW, MonotoneDescentOnLinearObjective) {
    NamedTensors params;
    params["w"] = ad::Tensor::scalar(5.0, true);
    OptimState st;
    st.cfg.weight_decay = 0.0;
    double prev = 5.0;
    for (int i = 0; i < 50; ++i) {
        NamedGrads grads;
        grads["w"] = ad::Tensor::scalar(1.0);
        adamw_step(params, grads, st, 1e-2);
        EXPECT_LT(params["w"].data[0], prev);
        prev = params["w"].data[0];
    }
}

TEST(AdamW, ZeroLrIsIdentity) {
    Rng rng(1);
    NamedTensors params;
    params["w"] = ad::Tensor::uniform({3, 3}, 1.0, rng, true);
    const auto before = params["w"].data;
    NamedGrads grads;
    grads["w"] = ad::Tensor::uniform({3, 3}, 1.0, rng);
    OptimState st;
    adamw_step(params, grads, st, 0.0);
    EXPECT_EQ(params["w"].data, before);
}

TEST(AdamW, NonFiniteGradientNamesParameter) {
    NamedTensors params;
    params["enc.bad"] = ad::Tensor::scalar(1.0, true);
    NamedGrads grads;
    grads["enc.bad"] = ad::Tensor::scalar(std::numeric_limits<double>::quiet_NaN());
    OptimState st;
    try {
        adamw_step(params, grads, st, 1e-3);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("enc.bad"), std::string::npos);
    }
}

TEST(Schedule, EndpointsExact) {
    ScheduleConfig cfg{10, 100, 1e-3, 1e-5};
    EXPECT_DOUBLE_EQ(cosine_warmup_lr(0, cfg), 0.0);
    EXPECT_DOUBLE_EQ(cosine_warmup_lr(10, cfg), 1e-3);   // warmup endpoint
    EXPECT_DOUBLE_EQ(cosine_warmup_lr(100, cfg), 1e-5);  // cosine endpoint
    EXPECT_DOUBLE_EQ(cosine_warmup_lr(250, cfg), 1e-5);  // clamps past the end
}

TEST(Schedule, MidpointAndContinuity) {
    ScheduleConfig cfg{10, 110, 2e-3, 2e-5};
    // progress 0.5 at step 60
    EXPECT_NEAR(cosine_warmup_lr(60, cfg), (2e-3 + 2e-5) / 2, 1e-12);
    // junction: warmup formula at its endpoint equals the cosine start
    const double warmup_end = cfg.base_lr * 10.0 / 10.0;
    EXPECT_LT(std::abs(cosine_warmup_lr(10, cfg) - warmup_end), 1e-12);
}

TEST(Schedule, SequenceIsContinuousEverywhere) {
    ScheduleConfig cfg{25, 400, 1e-4, 1e-6};
    double prev = cosine_warmup_lr(0, cfg);
    double max_jump = 0;
    for (std::int64_t s = 1; s <= 400; ++s) {
        const double lr = cosine_warmup_lr(s, cfg);
        max_jump = std::max(max_jump, std::abs(lr - prev));
        prev = lr;
    }
    EXPECT_LT(max_jump, cfg.base_lr * 0.05);
}

TEST(Schedule, Validation) {
    EXPECT_THROW(cosine_warmup_lr(0, ScheduleConfig{10, 10, 1e-3, 1e-5}), ConfigError);
    EXPECT_THROW(cosine_warmup_lr(0, ScheduleConfig{0, 10, 1e-5, 1e-3}), ConfigError);
    EXPECT_THROW(cosine_warmup_lr(-1, ScheduleConfig{0, 10, 1e-3, 1e-5}), ConfigError);
}
