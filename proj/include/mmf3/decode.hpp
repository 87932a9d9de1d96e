#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmf3/encoders.hpp"
#include "mmf3/layers.hpp"

namespace mmf3 {

// Masked self-attention, code attention (K = V = X_e^tok), FGF attention
// (K = V = F) and feed-forward, each followed by add & norm.
struct DecoderLayer {
    nc::AttentionParams self_attention;
    nc::LayerNormParams norm1;
    nc::AttentionParams code_attention;
    nc::LayerNormParams norm2;
    nc::AttentionParams fgf_attention;
    nc::LayerNormParams norm3;
    nc::FeedForwardParams ffn;
    nc::LayerNormParams norm4;
};

struct DecoderParams {
    nc::Parameter embedding; // summary vocab x d
    std::vector<DecoderLayer> layers;
    nc::Parameter w_out; // d x summary vocab
    nc::Parameter b_out; // 1 x summary vocab

    static DecoderParams create(nc::ParamStore& store, const std::string& prefix, const nc::AttentionConfig& attention,
                                Eigen::Index ff_dim, int layers, Eigen::Index vocab, Rng& rng);
};

// What the decoder reads from the encoder side.
struct DecoderMemory {
    nc::Var x_e_tok;
    std::vector<bool> token_mask;
    nc::Var fused; // F
    std::vector<bool> fused_mask;
};

// Teacher-forced (or prefix) logits, one row per input position.
nc::Var decoder_forward(std::span<const int> input_ids, const DecoderMemory& memory, const DecoderParams& params,
                        DropoutCtx drop = {});

// Summed negative log-likelihood of `targets` over non-PAD positions (1x1).
// A target row that is entirely PAD is rejected.
nc::Var cross_entropy(const nc::Var& logits, std::span<const int> targets);

// Batch loss: mean over samples of the per-sample summed NLL.
nc::Var batch_loss(std::span<const nc::Var> per_sample_sums);

// Splits SOS t1 .. tk EOS into decoder input (drop last) and target (drop first).
struct TeacherForcing {
    std::vector<int> input;
    std::vector<int> target;
};
TeacherForcing teacher_forcing(std::span<const int> summary_ids);

// Log-probabilities over the summary vocabulary for the next token after
// `prefix` (which starts with SOS).
using NextTokenFn = std::function<nc::RowVector(std::span<const int> prefix)>;

struct Hypothesis {
    std::vector<int> tokens; // generated ids, SOS excluded, EOS included when finished by it
    double log_prob = 0.0;
    bool finished = false;
};

// PAD and SOS are never generated.
bool is_candidate(int id);

// Argmax each step (lowest id wins ties) until EOS or max_len tokens.
Hypothesis greedy_decode(const NextTokenFn& next, int vocab_size, int max_len);

// Keeps the top `beam` partial hypotheses by total log-probability; finished
// ones are pooled and compared by total log-probability, no length
// normalization. Ties go to the lower token id, then the earlier hypothesis.
// The greedy sequence is always part of the compared set.
Hypothesis beam_search(const NextTokenFn& next, int vocab_size, int beam, int max_len);

// One line of a predictions file: {"id", "prediction", "reference"}, with
// space-joined tokens.
struct Prediction {
    std::string id;
    std::string prediction;
    std::string reference;
};

void write_predictions(const std::vector<Prediction>& predictions, const std::filesystem::path& path);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);
std::vector<std::string> split_tokens(const std::string& joined);
std::string join_tokens(const std::vector<std::string>& tokens);

} // namespace mmf3
