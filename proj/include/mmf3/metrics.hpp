#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmf3/corpus.hpp"

namespace mmf3::metrics {

using Sentence = corpus::TokenSeq;

// Corpus BLEU-4 in percent: pooled clipped n-gram precisions (n = 1..4),
// uniform weights, brevity penalty min(1, exp(1 - r/c)); a zero precision is
// replaced by 1e-9.
double bleu4(std::span<const Sentence> candidates, std::span<const Sentence> references);

struct MeteorParams {
    double alpha = 0.9;
    double beta = 3.0;
    double gamma = 0.5;
};

// Exact-match unigram alignment; percent.
double meteor(const Sentence& candidate, const Sentence& reference, MeteorParams params = {});

// Index pairs (candidate, reference) of the METEOR alignment, in candidate order.
std::vector<std::pair<std::size_t, std::size_t>> meteor_alignment(const Sentence& candidate,
                                                                  const Sentence& reference);

std::size_t lcs_length(const Sentence& a, const Sentence& b);

// F_lcs with beta = 1.2, percent.
double rouge_l(const Sentence& candidate, const Sentence& reference, double beta = 1.2);

// Per-sample CIDEr (n = 1..4, TF-IDF with document frequencies over the
// references, uniform average, scaled by 10).
std::vector<double> cider_scores(std::span<const Sentence> candidates, std::span<const Sentence> references);
double cider(std::span<const Sentence> candidates, std::span<const Sentence> references);

struct ScoreReport {
    double bleu4 = 0.0;   // percent
    double meteor = 0.0;  // mean, percent
    double rouge_l = 0.0; // mean, percent
    double cider = 0.0;   // mean, raw
    std::size_t samples = 0;

    nlohmann::json to_json() const;
    std::string table() const;
};

ScoreReport score(std::span<const Sentence> candidates, std::span<const Sentence> references);

} // namespace mmf3::metrics
