#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "mmf3/metrics.hpp"
#include "mmf3/rng.hpp"
#include "oracles.hpp"

using namespace mmf3;
using metrics::Sentence;

namespace {

Sentence words(const std::string& s) {
    Sentence out;
    std::string cur;
    for (char ch : s) {
        if (ch == ' ') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct Corpus {
    std::vector<Sentence> cands;
    std::vector<Sentence> refs;
};

Corpus hand_corpus() {
    const std::vector<std::pair<std::string, std::string>> pairs{
        {"returns the sum of a and b", "return the sum of a and b"},
        {"get the name", "gets the name of the user"},
        {"check if list is empty", "check whether the list is empty"},
        {"set the value", "set the value"},
        {"close the stream", "closes the input stream quietly"},
        {"compute the max of two values", "return the larger of two values"},
        {"parse a double from string", "parse the string as a double"},
        {"add item to cart", "adds an item to the cart"},
        {"the the the", "the cat"},
        {"reset counter", "reset the counter to zero and notify listeners"},
    };
    Corpus c;
    for (const auto& [a, b] : pairs) {
        c.cands.push_back(words(a));
        c.refs.push_back(words(b));
    }
    return c;
}

} // namespace

TEST_CASE("bleu4 hand values") {
    const std::vector<Sentence> same{words("the cat sat on the mat")};
    CHECK(metrics::bleu4(same, same) == doctest::Approx(100.0).epsilon(1e-12));
    // Three matched tokens against four reference tokens, no 4-gram in the candidate.
    const std::vector<Sentence> c{words("the cat sat")};
    const std::vector<Sentence> r{words("the cat sat down")};
    const double want = 100.0 * std::exp(1.0 - 4.0 / 3.0) * std::pow(1e-9, 0.25);
    CHECK(metrics::bleu4(c, r) == doctest::Approx(want).epsilon(1e-12));
    const std::vector<Sentence> none{words("x y z w")};
    CHECK(metrics::bleu4(none, same) < 1e-6);
}

TEST_CASE("meteor hand values") {
    CHECK(metrics::meteor(words("a b c d"), words("a b c d")) == doctest::Approx(99.21875).epsilon(1e-12));
    CHECK(metrics::meteor(words("d c b a"), words("a b c d")) == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(metrics::meteor(words("x y"), words("a b")) == 0.0);
    // One match out of two candidate tokens and four reference tokens.
    const double p = 0.5, r = 0.25;
    const double want = 100.0 * (1.0 - 0.5) * p * r / (0.9 * p + 0.1 * r);
    CHECK(metrics::meteor(words("a z"), words("a b c d")) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("rouge_l hand values") {
    CHECK(metrics::lcs_length(words("a c e"), words("a b c d e")) == 3);
    const double p = 1.0, r = 0.6, b2 = 1.44;
    CHECK(metrics::rouge_l(words("a c e"), words("a b c d e")) ==
          doctest::Approx(100.0 * (1 + b2) * p * r / (r + b2 * p)).epsilon(1e-12));
    CHECK(metrics::rouge_l(words("q"), words("a b")) == 0.0);
}

TEST_CASE("cider hand values") {
    const std::vector<Sentence> s{words("alpha beta gamma delta"), words("one two three four"),
                                  words("red green blue cyan")};
    for (double v : metrics::cider_scores(s, s)) CHECK(v == doctest::Approx(10.0).epsilon(1e-12));
    // Every reference contains "x", so its weight vanishes and only the rest counts.
    const std::vector<Sentence> refs{words("x a"), words("x b"), words("x c")};
    const std::vector<Sentence> cands{words("x"), words("x b"), words("c")};
    const auto got = metrics::cider_scores(cands, refs);
    CHECK(got[0] == 0.0);
    CHECK(got[2] == doctest::Approx(2.5).epsilon(1e-12));
    const auto want = oracle::cider(cands, refs);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-9);
}

TEST_CASE("hand corpus agrees with the independent oracles") {
    const auto c = hand_corpus();
    CHECK(std::abs(metrics::bleu4(c.cands, c.refs) - oracle::bleu4(c.cands, c.refs)) < 1e-9);
    const auto cider = metrics::cider_scores(c.cands, c.refs);
    const auto cider_want = oracle::cider(c.cands, c.refs);
    for (std::size_t i = 0; i < c.cands.size(); ++i) {
        INFO(i);
        CHECK(std::abs(metrics::meteor(c.cands[i], c.refs[i]) - oracle::meteor(c.cands[i], c.refs[i])) < 1e-9);
        CHECK(std::abs(metrics::rouge_l(c.cands[i], c.refs[i]) - oracle::rouge_l(c.cands[i], c.refs[i])) < 1e-9);
        CHECK(std::abs(cider[i] - cider_want[i]) < 1e-9);
    }
}

TEST_CASE("random sentences agree with the oracles") {
    Rng rng(77);
    const std::vector<std::string> pool{"a", "b", "c", "d", "e", "f"};
    std::vector<Sentence> cands, refs;
    for (int i = 0; i < 60; ++i) {
        Sentence c, r;
        for (std::uint64_t k = 1 + rng.below(7); k > 0; --k) c.push_back(pool[rng.below(pool.size())]);
        for (std::uint64_t k = 1 + rng.below(7); k > 0; --k) r.push_back(pool[rng.below(pool.size())]);
        // Greedy alignment: maximal exact matches, one-to-one, chunk count at
        // least the exhaustive minimum.
        const auto align = metrics::meteor_alignment(c, r);
        std::map<std::string, int> cc, rc;
        for (const auto& w : c) ++cc[w];
        for (const auto& w : r) ++rc[w];
        std::size_t common = 0;
        for (const auto& [w, k] : cc) common += static_cast<std::size_t>(std::min(k, rc[w]));
        CHECK(align.size() == common);
        std::set<std::size_t> ref_used;
        for (const auto& [i, j] : align) {
            CHECK(c[i] == r[j]);
            CHECK(ref_used.insert(j).second);
        }
        CHECK(std::abs(metrics::meteor(c, r) - oracle::meteor_from_alignment(align, c.size(), r.size())) < 1e-9);
        CHECK(metrics::meteor(c, r) <= oracle::meteor(c, r) + 1e-9);
        CHECK(std::abs(metrics::rouge_l(c, r) - oracle::rouge_l(c, r)) < 1e-9);
        cands.push_back(c);
        refs.push_back(r);
    }
    CHECK(std::abs(metrics::bleu4(cands, refs) - oracle::bleu4(cands, refs)) < 1e-9);
    const auto got = metrics::cider_scores(cands, refs);
    const auto want = oracle::cider(cands, refs);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-9);
}

TEST_CASE("corpus scores do not depend on sample order") {
    auto c = hand_corpus();
    const auto before = metrics::score(c.cands, c.refs);
    Rng rng(3);
    std::vector<std::size_t> order(c.cands.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    Corpus shuffled;
    for (auto i : order) {
        shuffled.cands.push_back(c.cands[i]);
        shuffled.refs.push_back(c.refs[i]);
    }
    const auto after = metrics::score(shuffled.cands, shuffled.refs);
    CHECK(after.bleu4 == doctest::Approx(before.bleu4).epsilon(1e-12));
    CHECK(after.meteor == doctest::Approx(before.meteor).epsilon(1e-12));
    CHECK(after.rouge_l == doctest::Approx(before.rouge_l).epsilon(1e-12));
    CHECK(after.cider == doctest::Approx(before.cider).epsilon(1e-12));
    CHECK(after.samples == 10);
    CHECK(before.to_json().contains("bleu4"));
}

TEST_CASE("mismatched corpus sizes are rejected") {
    const std::vector<Sentence> a{words("x")};
    const std::vector<Sentence> b;
    CHECK_THROWS(metrics::bleu4(a, b));
}
