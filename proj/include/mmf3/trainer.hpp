#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mmf3/config.hpp"
#include "mmf3/corpus.hpp"
#include "mmf3/model.hpp"

namespace mmf3 {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Config config;
    corpus::Vocab code_vocab;
    corpus::Vocab summary_vocab;
    std::vector<std::pair<std::string, nc::Matrix>> params;
    std::uint64_t epoch = 0;
    double best_valid = std::numeric_limits<double>::infinity();
};

Checkpoint snapshot(const Model& model, const corpus::Vocab& code_vocab, const corpus::Vocab& summary_vocab,
                    std::uint64_t epoch, double best_valid);

// Builds a model from the checkpoint config and copies every tensor in.
// Throws CheckpointError when names or shapes do not line up.
Model restore(const Checkpoint& ckpt);

// Layout: "MMF3" | u32 version | u64 payload bytes | u32 crc32(payload) | payload.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    bool improved = false;
};

struct TrainResult {
    Checkpoint best;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mean per-sample summed NLL with dropout disabled.
double evaluate_loss(const Model& model, const std::vector<Example>& examples);

// One SGD step over `batch`; returns the batch loss before the step.
double sgd_step(const Model& model, const std::vector<const Example*>& batch, double learning_rate, double clip_norm,
                DropoutCtx drop);

// Full loop: seeded shuffles, mini-batch SGD, validation loss after each
// epoch, best-validation checkpoint, patience-based stop.
TrainResult train(const std::vector<corpus::Sample>& train_set, const std::vector<corpus::Sample>& valid_set,
                  const Config& config, const EpochCallback& on_epoch = {});

// Same loop on already-prepared examples and vocabularies.
TrainResult train_examples(Model& model, const std::vector<Example>& train_set, const std::vector<Example>& valid_set,
                           const corpus::Vocab& code_vocab, const corpus::Vocab& summary_vocab,
                           const EpochCallback& on_epoch = {});

struct Vocabs {
    corpus::Vocab code;
    corpus::Vocab summary;
};
Vocabs build_vocabs(const std::vector<corpus::Sample>& train_set, const Config& config);

} // namespace mmf3
