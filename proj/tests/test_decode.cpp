#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "equation_checks.hpp"
#include "mmf3/corpus.hpp"
#include "mmf3/decode.hpp"
#include "mmf3/errors.hpp"

using namespace mmf3;

namespace {

// Fixed pseudo-random next-token distribution keyed on the prefix.
NextTokenFn table_model(std::uint64_t seed, int vocab, double sharpness = 3.0) {
    return [=](std::span<const int> prefix) {
        std::uint64_t h = seed;
        for (int id : prefix) h = mix64(h ^ static_cast<std::uint64_t>(id + 1));
        Rng rng(h);
        nc::RowVector logits(vocab);
        for (int i = 0; i < vocab; ++i) logits(i) = sharpness * rng.normal();
        return nc::log_softmax_row(logits);
    };
}

std::function<std::vector<double>(const std::vector<int>&)> as_oracle_fn(const NextTokenFn& next) {
    return [next](const std::vector<int>& prefix) {
        const auto lp = next(prefix);
        return std::vector<double>(lp.data(), lp.data() + lp.size());
    };
}

} // namespace

TEST_CASE("decoder matches the oracle") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        CHECK(checks::decoder_error(seed) < 1e-10);
        CHECK(checks::cross_entropy_error(seed) < 1e-10);
    }
}

TEST_CASE("decoder is causal") {
    auto c = checks::decoder_case(4);
    c.input = {1, 5, 6, 7, 8};
    const auto base = decoder_forward(c.input, checks::memory_of(c), c.params).value();
    auto changed = c.input;
    changed[3] = 9;
    const auto other = decoder_forward(changed, checks::memory_of(c), c.params).value();
    CHECK((base.topRows(3) - other.topRows(3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((base.row(3) - other.row(3)).cwiseAbs().maxCoeff() > 1e-9);
    // A shorter prefix reproduces the leading rows.
    const std::vector<int> prefix(c.input.begin(), c.input.begin() + 2);
    const auto short_out = decoder_forward(prefix, checks::memory_of(c), c.params).value();
    CHECK((short_out - base.topRows(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross_entropy closed forms") {
    const nc::Matrix uniform = nc::Matrix::Zero(4, 6);
    const std::vector<int> targets{3, 4, 2, 0};
    CHECK(cross_entropy(nc::constant(uniform), targets).value()(0, 0) ==
          doctest::Approx(3.0 * std::log(6.0)).epsilon(1e-14));
    nc::Matrix sure = nc::Matrix::Constant(2, 5, -800.0);
    sure(0, 4) = 800.0;
    sure(1, 2) = 800.0;
    CHECK(cross_entropy(nc::constant(sure), std::vector<int>{4, 2}).value()(0, 0) < 1e-12);
    CHECK_THROWS(cross_entropy(nc::constant(uniform), std::vector<int>{0, 0, 0, 0}));

    std::vector<nc::Var> sums{nc::constant(nc::Matrix::Constant(1, 1, 2.0)),
                              nc::constant(nc::Matrix::Constant(1, 1, 5.0))};
    CHECK(batch_loss(sums).value()(0, 0) == doctest::Approx(3.5));
}

TEST_CASE("teacher_forcing shifts the summary") {
    const std::vector<int> ids{1, 7, 8, 2};
    const auto tf = teacher_forcing(ids);
    CHECK(tf.input == std::vector<int>{1, 7, 8});
    CHECK(tf.target == std::vector<int>{7, 8, 2});
}

TEST_CASE("greedy never emits PAD or SOS and stops at EOS") {
    CHECK_FALSE(is_candidate(corpus::kPad));
    CHECK_FALSE(is_candidate(corpus::kSos));
    CHECK(is_candidate(corpus::kEos));
    const NextTokenFn favour_pad = [](std::span<const int> prefix) {
        nc::RowVector lp = nc::RowVector::Constant(6, -10.0);
        lp(0) = -0.01;
        lp(1) = -0.02;
        lp(prefix.size() < 3 ? 4 : 2) = -1.0;
        return lp;
    };
    const auto h = greedy_decode(favour_pad, 6, 10);
    CHECK(h.tokens == std::vector<int>{4, 4, 2});
    CHECK(h.finished);
    CHECK(h.log_prob == doctest::Approx(-3.0));
    const auto b = beam_search(favour_pad, 6, 3, 10);
    for (int id : b.tokens) CHECK((id != 0 && id != 1));
}

TEST_CASE("greedy respects max_len") {
    const NextTokenFn never_end = [](std::span<const int>) {
        nc::RowVector lp = nc::RowVector::Constant(5, -5.0);
        lp(4) = -0.1;
        return lp;
    };
    const auto h = greedy_decode(never_end, 5, 4);
    CHECK(h.tokens.size() == 4);
    CHECK(h.tokens.back() == 4);
}

TEST_CASE("beam of one equals greedy and wider beams never score lower") {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        const auto next = table_model(seed, 9);
        const auto g = greedy_decode(next, 9, 6);
        const auto b1 = beam_search(next, 9, 1, 6);
        CHECK(b1.tokens == g.tokens);
        CHECK(b1.log_prob == doctest::Approx(g.log_prob).epsilon(1e-12));
        for (int beam : {2, 4, 8}) CHECK(beam_search(next, 9, beam, 6).log_prob >= g.log_prob - 1e-12);
    }
}

TEST_CASE("a full-width beam finds the exhaustive optimum") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const int vocab = 7, max_len = 3;
        const auto next = table_model(seed, vocab, 1.5);
        const auto best = oracle::enumerate(as_oracle_fn(next), vocab, max_len, corpus::kEos,
                                            {corpus::kPad, corpus::kSos});
        const auto found = beam_search(next, vocab, 25, max_len);
        CHECK(found.log_prob == doctest::Approx(best.score).epsilon(1e-12));
        CHECK(found.tokens == best.tokens);
    }
}

TEST_CASE("predictions round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "mmf3_pred_test";
    std::filesystem::create_directories(dir);
    const std::vector<Prediction> preds{{"a", "get the value", "return the value"}, {"b", "", "x"}};
    write_predictions(preds, dir / "p.jsonl");
    const auto back = read_predictions(dir / "p.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "a");
    CHECK(back[0].prediction == "get the value");
    CHECK(back[1].prediction.empty());
    CHECK(back[1].reference == "x");
    {
        std::ofstream out(dir / "bad.jsonl");
        out << "{\"id\":\"a\",\"prediction\":\"x\",\"reference\":\"y\"}\n{oops\n";
    }
    CHECK_THROWS_AS(read_predictions(dir / "bad.jsonl"), DataError);
    CHECK(split_tokens("  a b\tc ") == std::vector<std::string>{"a", "b", "c"});
    CHECK(join_tokens({"a", "b"}) == "a b");
    std::filesystem::remove_all(dir);
}
