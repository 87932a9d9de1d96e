#include "mmf3/trainer.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <zlib.h>

#include "mmf3/errors.hpp"
#include "mmf3/rng.hpp"

namespace mmf3 {

Checkpoint snapshot(const Model& model, const corpus::Vocab& code_vocab, const corpus::Vocab& summary_vocab,
                    std::uint64_t epoch, double best_valid) {
    Checkpoint c{model.config(), code_vocab, summary_vocab, {}, epoch, best_valid};
    for (const auto& p : model.params().all()) c.params.emplace_back(p.name(), p.value());
    return c;
}

Model restore(const Checkpoint& ckpt) {
    Model model(ckpt.config, ckpt.code_vocab.size(), ckpt.summary_vocab.size());
    const auto& store = model.params();
    if (store.size() != ckpt.params.size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(ckpt.params.size()) + " tensors, model expects " +
                              std::to_string(store.size()));
    }
    for (const auto& [name, value] : ckpt.params) {
        if (!store.contains(name)) throw CheckpointError("unexpected tensor " + name);
        auto& target = store.at(name).mutable_value();
        if (target.rows() != value.rows() || target.cols() != value.cols()) {
            throw CheckpointError("tensor " + name + " has the wrong shape");
        }
        target = value;
    }
    return model;
}

namespace {

constexpr char kMagic[4] = {'M', 'M', 'F', '3'};

class Writer {
  public:
    template <typename T>
    void pod(const T& v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof(T));
    }
    void str(const std::string& s) {
        pod(static_cast<std::uint64_t>(s.size()));
        buf_.append(s);
    }
    void matrix(const nc::Matrix& m) {
        pod(static_cast<std::uint64_t>(m.rows()));
        pod(static_cast<std::uint64_t>(m.cols()));
        buf_.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
    }
    const std::string& bytes() const { return buf_; }

  private:
    std::string buf_;
};

class Reader {
  public:
    explicit Reader(std::string_view data) : data_(data) {}

    template <typename T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint64_t>();
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    nc::Matrix matrix() {
        const auto rows = pod<std::uint64_t>();
        const auto cols = pod<std::uint64_t>();
        if (rows > (1u << 26) || cols > (1u << 26)) throw CheckpointError("corrupt checkpoint: absurd tensor shape");
        const auto bytes = rows * cols * sizeof(double);
        need(bytes);
        nc::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        std::memcpy(m.data(), data_.data() + pos_, bytes);
        pos_ += bytes;
        return m;
    }
    bool done() const { return pos_ == data_.size(); }

  private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw CheckpointError("corrupt checkpoint: payload ends early");
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

std::uint32_t checksum(const std::string& payload) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
}

void write_vocab(Writer& w, const corpus::Vocab& v) {
    w.pod(static_cast<std::uint64_t>(v.size()));
    for (const auto& t : v.tokens()) w.str(t);
}

corpus::Vocab read_vocab(Reader& r) {
    const auto n = r.pod<std::uint64_t>();
    std::vector<std::string> tokens;
    for (std::uint64_t i = 0; i < n; ++i) tokens.push_back(r.str());
    try {
        return corpus::Vocab::from_tokens(std::move(tokens));
    } catch (const DataError& e) {
        throw CheckpointError(std::string("corrupt checkpoint vocabulary: ") + e.what());
    }
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    Writer payload;
    payload.str(ckpt.config.to_json().dump());
    payload.pod(ckpt.epoch);
    payload.pod(ckpt.best_valid);
    write_vocab(payload, ckpt.code_vocab);
    write_vocab(payload, ckpt.summary_vocab);
    payload.pod(static_cast<std::uint64_t>(ckpt.params.size()));
    for (const auto& [name, m] : ckpt.params) {
        payload.str(name);
        payload.matrix(m);
    }

    Writer header;
    header.pod(kMagic);
    header.pod(kCheckpointVersion);
    header.pod(static_cast<std::uint64_t>(payload.bytes().size()));
    header.pod(checksum(payload.bytes()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(header.bytes().data(), static_cast<std::streamsize>(header.bytes().size()));
    out.write(payload.bytes().data(), static_cast<std::streamsize>(payload.bytes().size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();

    Reader header(data);
    const auto magic = header.pod<std::array<char, 4>>();
    if (std::memcmp(magic.data(), kMagic, 4) != 0) throw CheckpointError("not an MMF3 checkpoint: " + path.string());
    const auto version = header.pod<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    const auto size = header.pod<std::uint64_t>();
    const auto crc = header.pod<std::uint32_t>();
    constexpr std::size_t kHeader = 4 + 4 + 8 + 4;
    if (data.size() != kHeader + size) throw CheckpointError("corrupt checkpoint: truncated or padded file");
    const std::string payload = data.substr(kHeader);
    if (checksum(payload) != crc) throw CheckpointError("corrupt checkpoint: checksum mismatch");

    Reader r(payload);
    Checkpoint c;
    try {
        c.config.merge_json(nlohmann::json::parse(r.str()));
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint config: ") + e.what());
    }
    c.epoch = r.pod<std::uint64_t>();
    c.best_valid = r.pod<double>();
    c.code_vocab = read_vocab(r);
    c.summary_vocab = read_vocab(r);
    const auto n = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
        auto name = r.str();
        c.params.emplace_back(std::move(name), r.matrix());
    }
    if (!r.done()) throw CheckpointError("corrupt checkpoint: trailing bytes");
    return c;
}

double evaluate_loss(const Model& model, const std::vector<Example>& examples) {
    if (examples.empty()) throw DataError("evaluation split is empty");
    nc::NoGradGuard no_grad;
    double total = 0.0;
    for (const auto& ex : examples) total += model.loss(ex).value()(0, 0);
    return total / static_cast<double>(examples.size());
}

double sgd_step(const Model& model, const std::vector<const Example*>& batch, double learning_rate, double clip_norm,
                DropoutCtx drop) {
    const auto& store = model.params();
    store.zero_grad();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    // Per-sample backward passes accumulate into the same parameter grads;
    // scaling each by 1/B gives the gradient of the batch-mean loss.
    for (const Example* ex : batch) {
        const auto l = nc::scale(model.loss(*ex, drop), inv_b);
        loss += l.value()(0, 0);
        nc::backward(l);
    }
    if (!std::isfinite(loss)) throw NumericError("training loss became non-finite");
    double factor = learning_rate;
    if (clip_norm > 0.0) {
        const double norm = store.grad_norm();
        if (!std::isfinite(norm)) throw NumericError("gradient norm became non-finite");
        if (norm > clip_norm) factor *= clip_norm / norm;
    }
    for (const auto& p : store.all()) {
        if (p.trainable() && p.grad_storage().size() != 0) p.mutable_value() -= factor * p.grad_storage();
    }
    store.zero_grad();
    return loss;
}

Vocabs build_vocabs(const std::vector<corpus::Sample>& train_set, const Config& config) {
    std::vector<corpus::TokenSeq> code, summary;
    for (const auto& s : train_set) {
        code.push_back(corpus::tokenize_code(s.code));
        summary.push_back(corpus::tokenize_summary(s.summary));
    }
    return {corpus::build_vocab(code, static_cast<std::size_t>(config.code_vocab_cap)),
            corpus::build_vocab(summary, static_cast<std::size_t>(config.summary_vocab_cap))};
}

TrainResult train_examples(Model& model, const std::vector<Example>& train_set, const std::vector<Example>& valid_set,
                           const corpus::Vocab& code_vocab, const corpus::Vocab& summary_vocab,
                           const EpochCallback& on_epoch) {
    const auto& cfg = model.config();
    if (train_set.empty()) throw DataError("training split is empty");
    if (valid_set.empty()) throw DataError("validation split is empty");

    Rng shuffle_rng(mix64(cfg.seed ^ 0x5348554646ULL));
    Rng dropout_rng(mix64(cfg.seed ^ 0x44524f50ULL));
    const DropoutCtx drop{cfg.dropout, cfg.dropout > 0.0 ? &dropout_rng : nullptr};

    TrainResult result;
    result.best = snapshot(model, code_vocab, summary_vocab, 0, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            std::vector<const Example*> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
                batch.push_back(&train_set[order[i]]);
            }
            epoch_loss += sgd_step(model, batch, cfg.learning_rate, cfg.clip_norm, drop);
            ++batches;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(batches);
        rec.valid_loss = evaluate_loss(model, valid_set);
        if (!std::isfinite(rec.valid_loss)) throw NumericError("validation loss became non-finite");
        rec.improved = rec.valid_loss < result.best.best_valid;
        if (rec.improved) {
            result.best = snapshot(model, code_vocab, summary_vocab, static_cast<std::uint64_t>(epoch), rec.valid_loss);
            result.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (since_best >= cfg.patience) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

TrainResult train(const std::vector<corpus::Sample>& train_set, const std::vector<corpus::Sample>& valid_set,
                  const Config& config, const EpochCallback& on_epoch) {
    config.validate();
    const auto vocabs = build_vocabs(train_set, config);
    Model model(config, vocabs.code.size(), vocabs.summary.size());
    const auto train_ex = make_examples(train_set, vocabs.code, vocabs.summary, config);
    const auto valid_ex = make_examples(valid_set, vocabs.code, vocabs.summary, config);
    return train_examples(model, train_ex, valid_ex, vocabs.code, vocabs.summary, on_epoch);
}

} // namespace mmf3
