#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmf3/align.hpp"
#include "mmf3/config.hpp"
#include "mmf3/corpus.hpp"
#include "mmf3/decode.hpp"
#include "mmf3/encoders.hpp"
#include "mmf3/fusion.hpp"

namespace mmf3 {

// One sample ready for the network: ids truncated to the configured lengths,
// frozen node features, propagation matrix and the clipped match map.
struct Example {
    std::string id;
    std::vector<int> code_ids;    // <= max_len, no padding
    nc::Matrix node_features;     // kept nodes x d_model, frozen
    nc::Matrix propagation;       // kept nodes x kept nodes
    align::MatchMap match;        // leaf id -> token span, inside the kept ranges
    std::vector<int> summary_ids; // SOS ... EOS, <= max_summary_len, no padding
    corpus::TokenSeq reference;   // summary tokens for scoring

    std::size_t nodes() const { return static_cast<std::size_t>(node_features.rows()); }
};

Example make_example(const corpus::Sample& sample, const corpus::Vocab& code_vocab,
                     const corpus::Vocab& summary_vocab, const Config& config);

std::vector<Example> make_examples(const std::vector<corpus::Sample>& samples, const corpus::Vocab& code_vocab,
                                   const corpus::Vocab& summary_vocab, const Config& config);

// Encoder-side tensors for one example.
struct Encoded {
    CodeEncoding code;
    nc::Var x_ast;   // GCN output, zero-padded to the shared length
    nc::Var x_e_ast; // AST encoder output
    nc::Var fused;   // F
    DecoderMemory memory;
};

class Model {
  public:
    Model(const Config& config, std::size_t code_vocab_size, std::size_t summary_vocab_size);

    const Config& config() const { return config_; }
    const nc::ParamStore& params() const { return store_; }
    std::size_t code_vocab_size() const { return code_vocab_size_; }
    std::size_t summary_vocab_size() const { return summary_vocab_size_; }

    const nc::Parameter& code_embedding() const { return code_embedding_; }
    const EncoderStack& code_encoder() const { return code_encoder_; }
    const GcnStack& gcn() const { return gcn_; }
    const EncoderStack& ast_encoder() const { return ast_encoder_; }
    const FusionParams& fusion() const { return fusion_; }
    const DecoderParams& decoder() const { return decoder_; }

    // Rows are padded to max(tokens, nodes), or to `pad_to` when it is larger.
    // Padding beyond the real rows never changes the real outputs.
    Encoded encode(const Example& ex, DropoutCtx drop = {}, Eigen::Index pad_to = 0) const;

    // Summed next-token NLL for one example (teacher forcing).
    nc::Var loss(const Example& ex, DropoutCtx drop = {}) const;

    // Next-token log-probabilities given the encoder memory and a SOS-led prefix.
    nc::RowVector next_log_probs(const DecoderMemory& memory, std::span<const int> prefix) const;

    Hypothesis summarize(const Example& ex, int beam) const;

  private:
    Config config_;
    std::size_t code_vocab_size_;
    std::size_t summary_vocab_size_;
    nc::ParamStore store_;
    nc::Parameter code_embedding_;
    EncoderStack code_encoder_;
    GcnStack gcn_;
    EncoderStack ast_encoder_;
    FusionParams fusion_;
    DecoderParams decoder_;
};

nc::AttentionConfig attention_config(const Config& config);

// Strips SOS/EOS and maps ids back to tokens.
corpus::TokenSeq detokenize(std::span<const int> ids, const corpus::Vocab& vocab);

} // namespace mmf3
