#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gainrag/gain.hpp"
#include "gainrag/mock_lm.hpp"
#include "support/gain_oracle.hpp"

#include <cmath>
#include <random>

using namespace gainrag;
using namespace gainrag::gain;

namespace {

TokenScoreSeq seq_of(std::vector<double> logprobs) {
    TokenScoreSeq seq;
    for (std::size_t i = 0; i < logprobs.size(); ++i) {
        seq.tokens.push_back("t" + std::to_string(i));
    }
    seq.logprobs = std::move(logprobs);
    return seq;
}

/// The worked example: with-context (0.5, 1/6, 1/6, 1/6), without-context
/// uniform, realized token the favored one.
lm::MockLMSpec worked_example_spec() {
    lm::MockLMSpec spec;
    spec.vocabulary = {"paris", "a", "b", "c"};
    spec.default_distribution = {{"paris", 0.25}, {"a", 0.25}, {"b", 0.25}, {"c", 0.25}};
    spec.rules.push_back(
        {"paris-doc", {{"paris", 0.5}, {"a", 1.0 / 6}, {"b", 1.0 / 6}, {"c", 1.0 / 6}}});
    return spec;
}

} // namespace

TEST_CASE("perplexity of [ln 0.25] is 4") {
    CHECK(perplexity(seq_of({std::log(0.25)})) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("perplexity of certain tokens is 1") {
    CHECK(perplexity(seq_of({0.0, 0.0, 0.0})) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("perplexity is the geometric mean reciprocal") {
    CHECK(perplexity(seq_of({std::log(0.5), std::log(0.125)})) ==
          doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("perplexity rejects empty sequences") {
    TokenScoreSeq empty;
    CHECK_THROWS_AS(perplexity(empty), std::invalid_argument);
}

TEST_CASE("long low-probability sequences stay finite") {
    std::vector<double> logprobs(500, -20.0);
    const double value = perplexity(seq_of(std::move(logprobs)));
    CHECK(std::isfinite(value));
    CHECK(value == doctest::Approx(std::exp(20.0)).epsilon(1e-9));
}

TEST_CASE("alpha = 0 makes the approximate adjustment the identity") {
    const auto with_ctx = seq_of({std::log(0.5), std::log(0.3)});
    const auto without_ctx = seq_of({std::log(0.25), std::log(0.7)});
    const auto out = contrastive_score_seq(with_ctx, without_ctx, 0.0, GainMode::Approximate);
    CHECK(out.logprobs[0] == with_ctx.logprobs[0]);
    CHECK(out.logprobs[1] == with_ctx.logprobs[1]);
}

TEST_CASE("approximate adjustment of the worked pair") {
    const auto with_ctx = seq_of({std::log(0.5)});
    const auto without_ctx = seq_of({std::log(0.25)});
    const auto out = contrastive_score_seq(with_ctx, without_ctx, 0.5, GainMode::Approximate);
    CHECK(out.logprobs[0] == doctest::Approx(-0.3465736).epsilon(1e-6));
    CHECK_FALSE(out.normalized);
}

TEST_CASE("exact adjustment of the worked distributions") {
    lm::MockBackend backend(worked_example_spec());
    const auto with_ctx = backend.score_continuation("paris-doc", "paris", true);
    const auto without_ctx = backend.score_continuation("plain", "paris", true);

    const auto out = contrastive_score_seq(with_ctx, without_ctx, 0.5, GainMode::Exact);

    // Independent arithmetic for the same step.
    const double adj_top = 1.5 * std::log(0.5) - 0.5 * std::log(0.25);
    const double adj_rest = 1.5 * std::log(1.0 / 6) - 0.5 * std::log(0.25);
    const double z = std::exp(adj_top) + 3.0 * std::exp(adj_rest);
    const double expected = std::log(std::exp(adj_top) / z);

    CHECK(out.logprobs[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(out.logprobs[0] == doctest::Approx(-0.456).epsilon(1e-3));

    REQUIRE(out.full_distributions.has_value());
    double sum = 0.0;
    for (const auto& [tok, lp] : out.full_distributions->front()) sum += std::exp(lp);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("exact mode at alpha = 0 reproduces the with-context scores") {
    lm::MockBackend backend(worked_example_spec());
    const auto with_ctx = backend.score_continuation("paris-doc", "paris a", true);
    const auto without_ctx = backend.score_continuation("plain", "paris a", true);
    const auto out = contrastive_score_seq(with_ctx, without_ctx, 0.0, GainMode::Exact);
    for (std::size_t j = 0; j < out.logprobs.size(); ++j) {
        CHECK(out.logprobs[j] == doctest::Approx(with_ctx.logprobs[j]).epsilon(1e-12));
    }
}

TEST_CASE("token mismatch between the paired scorings is an error") {
    const auto with_ctx = seq_of({std::log(0.5)});
    auto without_ctx = seq_of({std::log(0.5)});
    without_ctx.tokens[0] = "different";
    CHECK_THROWS_AS(contrastive_score_seq(with_ctx, without_ctx, 0.5, GainMode::Approximate),
                    std::invalid_argument);
}

TEST_CASE("exact mode without full distributions is a capability error") {
    const auto with_ctx = seq_of({std::log(0.5)});
    const auto without_ctx = seq_of({std::log(0.25)});
    CHECK_THROWS_AS(contrastive_score_seq(with_ctx, without_ctx, 0.5, GainMode::Exact),
                    lm::CapabilityError);
}

TEST_CASE("exact mode rejects distributions over different supports") {
    // A zero-probability token is dropped from the mock's emitted step
    // distribution, so the two sides no longer cover the same tokens.
    lm::MockLMSpec spec;
    spec.vocabulary = {"x", "y", "z"};
    spec.default_distribution = {{"x", 0.4}, {"y", 0.3}, {"z", 0.3}};
    spec.rules.push_back({"trigger", {{"x", 0.5}, {"y", 0.5}, {"z", 0.0}}});
    lm::MockBackend backend(spec);

    const auto with_ctx = backend.score_continuation("trigger", "x", true);
    const auto without_ctx = backend.score_continuation("plain", "x", true);
    CHECK_THROWS_WITH_AS(contrastive_score_seq(with_ctx, without_ctx, 0.5, GainMode::Exact),
                         doctest::Contains("support"), std::invalid_argument);
}

TEST_CASE("gain_signal collapses to plain perplexity when the passage is ignored") {
    lm::MockLMSpec spec;
    spec.vocabulary = {"x", "y"};
    spec.default_distribution = {{"x", 0.75}, {"y", 0.25}};
    lm::MockBackend backend(spec);

    GainConfig config;
    config.alpha = 0.7;
    const double signal = gain_signal(backend, "a question", "an unused passage", "x y", config);

    const auto plain =
        backend.score_continuation(config.generation_template.render("an unused passage",
                                                                     "a question"),
                                   "x y", false);
    CHECK(signal == doctest::Approx(perplexity(plain)).epsilon(1e-12));
}

TEST_CASE("gain_signal reproduces the worked single-token example") {
    lm::MockBackend backend(worked_example_spec());
    GainConfig config;
    config.alpha = 0.5;

    const double signal = gain_signal(backend, "q", "the paris-doc passage", "paris", config);

    const double adj_top = 1.5 * std::log(0.5) - 0.5 * std::log(0.25);
    const double adj_rest = 1.5 * std::log(1.0 / 6) - 0.5 * std::log(0.25);
    const double z = std::exp(adj_top) + 3.0 * std::exp(adj_rest);
    CHECK(signal == doctest::Approx(z / std::exp(adj_top)).epsilon(1e-12));
    CHECK(signal == doctest::Approx(1.577).epsilon(1e-3));

    SUBCASE("alpha = 0 gives the raw reciprocal probability") {
        config.alpha = 0.0;
        const double baseline =
            gain_signal(backend, "q", "the paris-doc passage", "paris", config);
        CHECK(baseline == doctest::Approx(2.0).epsilon(1e-9));
    }
}

TEST_CASE("alpha = 0 reduction holds on randomized mocks") {
    std::mt19937_64 gen(2025);
    for (int trial = 0; trial < 60; ++trial) {
        const auto spec = testsupport::random_mock_spec(gen(), 4 + trial % 5);
        lm::MockBackend backend(spec);
        const std::string answer = testsupport::random_answer(spec, gen, 4);
        const std::string passage =
            (trial % 2 == 0) ? "text with marker-alpha inside" : "unremarkable text";

        GainConfig config;
        config.alpha = 0.0;
        config.mode = trial % 2 == 0 ? GainMode::Exact : GainMode::Approximate;
        const double signal = gain_signal(backend, "question", passage, answer, config);

        const auto with_ctx = backend.score_continuation(
            config.generation_template.render(passage, "question"), answer, false);
        CHECK(std::abs(signal - perplexity(with_ctx)) <= 1e-9);
    }
}

TEST_CASE("gain_signal matches the brute-force oracle on random mocks") {
    std::mt19937_64 gen(77);
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const auto spec = testsupport::random_mock_spec(gen(), 4 + trial % 5);
        lm::MockBackend backend(spec);
        const std::string answer = testsupport::random_answer(spec, gen, 4);
        const std::string passage = (trial % 3 == 0)   ? "passage with marker-alpha"
                                    : (trial % 3 == 1) ? "passage with marker-beta"
                                                       : "plain passage";
        GainConfig config;
        config.alpha = 0.25 * (trial % 4);
        config.mode = GainMode::Exact;

        const double signal =
            gain_signal(backend, "the question", passage, answer, config);
        const double oracle = testsupport::brute_force_gain(
            spec, "the question", passage, answer, config.alpha, config.generation_template);
        CHECK(std::abs(signal - oracle) <= 1e-9);
        ++checked;
    }
    CHECK(checked == 40);
}
