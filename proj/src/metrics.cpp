#include "mmf3/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <iomanip>
#include <stdexcept>

namespace mmf3::metrics {

namespace {

using NGram = std::vector<std::string>;
using Counts = std::map<NGram, double>;

Counts ngram_counts(const Sentence& s, std::size_t n) {
    Counts c;
    if (s.size() < n) return c;
    for (std::size_t i = 0; i + n <= s.size(); ++i) c[NGram(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                            s.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
    return c;
}

void require_pairs(std::span<const Sentence> c, std::span<const Sentence> r) {
    if (c.size() != r.size()) throw std::invalid_argument("candidate and reference counts differ");
    if (c.empty()) throw std::invalid_argument("empty corpus");
}

} // namespace

double bleu4(std::span<const Sentence> candidates, std::span<const Sentence> references) {
    require_pairs(candidates, references);
    constexpr double kEpsilon = 1e-9;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        double matched = 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto cand = ngram_counts(candidates[i], n);
            const auto ref = ngram_counts(references[i], n);
            for (const auto& [g, c] : cand) {
                total += c;
                const auto it = ref.find(g);
                if (it != ref.end()) matched += std::min(c, it->second);
            }
        }
        const double p = (total > 0.0 && matched > 0.0) ? matched / total : kEpsilon;
        log_sum += 0.25 * std::log(p);
    }
    double c_len = 0.0;
    double r_len = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        c_len += static_cast<double>(candidates[i].size());
        r_len += static_cast<double>(references[i].size());
    }
    if (c_len == 0.0) return 0.0;
    const double bp = std::min(1.0, std::exp(1.0 - r_len / c_len));
    return 100.0 * bp * std::exp(log_sum);
}

std::vector<std::pair<std::size_t, std::size_t>> meteor_alignment(const Sentence& candidate,
                                                                  const Sentence& reference) {
    // Greedy left to right: continue the current chunk when the next reference
    // word matches, otherwise take the leftmost unused match.
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::vector<bool> used(reference.size(), false);
    bool have_prev = false;
    std::size_t prev_ref = 0;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        std::size_t pick = reference.size();
        if (have_prev && prev_ref + 1 < reference.size() && !used[prev_ref + 1] &&
            reference[prev_ref + 1] == candidate[i]) {
            pick = prev_ref + 1;
        } else {
            for (std::size_t j = 0; j < reference.size(); ++j) {
                if (!used[j] && reference[j] == candidate[i]) {
                    pick = j;
                    break;
                }
            }
        }
        if (pick == reference.size()) {
            have_prev = false;
            continue;
        }
        used[pick] = true;
        out.emplace_back(i, pick);
        have_prev = true;
        prev_ref = pick;
    }
    return out;
}

double meteor(const Sentence& candidate, const Sentence& reference, MeteorParams params) {
    const auto align = meteor_alignment(candidate, reference);
    const auto m = static_cast<double>(align.size());
    if (m == 0.0) return 0.0;
    // Chunks: maximal runs adjacent in both sentences.
    std::size_t chunks = 1;
    for (std::size_t k = 1; k < align.size(); ++k) {
        const bool adjacent = align[k].first == align[k - 1].first + 1 && align[k].second == align[k - 1].second + 1;
        if (!adjacent) ++chunks;
    }
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(reference.size());
    const double fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
    const double frag = static_cast<double>(chunks) / m;
    const double penalty = params.gamma * std::pow(frag, params.beta);
    return 100.0 * (1.0 - penalty) * fmean;
}

std::size_t lcs_length(const Sentence& a, const Sentence& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const Sentence& candidate, const Sentence& reference, double beta) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const auto lcs = static_cast<double>(lcs_length(candidate, reference));
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(reference.size());
    const double b2 = beta * beta;
    return 100.0 * (1.0 + b2) * p * r / (r + b2 * p);
}

std::vector<double> cider_scores(std::span<const Sentence> candidates, std::span<const Sentence> references) {
    require_pairs(candidates, references);
    const auto docs = static_cast<double>(references.size());
    std::vector<double> scores(candidates.size(), 0.0);
    for (std::size_t n = 1; n <= 4; ++n) {
        std::map<NGram, double> df;
        std::vector<Counts> ref_counts;
        for (const auto& r : references) {
            ref_counts.push_back(ngram_counts(r, n));
            for (const auto& [g, c] : ref_counts.back()) df[g] += 1.0;
        }
        auto weigh = [&](const Counts& counts) {
            Counts v;
            double total = 0.0;
            for (const auto& [g, c] : counts) total += c;
            for (const auto& [g, c] : counts) {
                const auto it = df.find(g);
                const double d = it == df.end() ? 0.0 : it->second;
                v[g] = (c / total) * std::log(docs / std::max(1.0, d));
            }
            return v;
        };
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto vc = weigh(ngram_counts(candidates[i], n));
            const auto vr = weigh(ref_counts[i]);
            double dot = 0.0, nc = 0.0, nr = 0.0;
            for (const auto& [g, w] : vc) {
                nc += w * w;
                const auto it = vr.find(g);
                if (it != vr.end()) dot += w * it->second;
            }
            for (const auto& [g, w] : vr) nr += w * w;
            if (nc > 0.0 && nr > 0.0) scores[i] += 10.0 * 0.25 * dot / (std::sqrt(nc) * std::sqrt(nr));
        }
    }
    return scores;
}

double cider(std::span<const Sentence> candidates, std::span<const Sentence> references) {
    const auto s = cider_scores(candidates, references);
    double total = 0.0;
    for (double v : s) total += v;
    return total / static_cast<double>(s.size());
}

ScoreReport score(std::span<const Sentence> candidates, std::span<const Sentence> references) {
    require_pairs(candidates, references);
    ScoreReport r;
    r.samples = candidates.size();
    r.bleu4 = bleu4(candidates, references);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        r.meteor += meteor(candidates[i], references[i]);
        r.rouge_l += rouge_l(candidates[i], references[i]);
    }
    r.meteor /= static_cast<double>(r.samples);
    r.rouge_l /= static_cast<double>(r.samples);
    r.cider = cider(candidates, references);
    return r;
}

nlohmann::json ScoreReport::to_json() const {
    return {{"bleu4", bleu4}, {"meteor", meteor}, {"rouge_l", rouge_l}, {"cider", cider}, {"samples", samples}};
}

std::string ScoreReport::table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "metric    score\n";
    os << "BLEU-4    " << bleu4 << "\n";
    os << "METEOR    " << meteor << "\n";
    os << "ROUGE-L   " << rouge_l << "\n";
    os << "CIDEr     " << std::setprecision(4) << cider << "\n";
    os << "samples   " << samples << "\n";
    return os.str();
}

} // namespace mmf3::metrics
