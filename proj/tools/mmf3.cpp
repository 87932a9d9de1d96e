#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mmf3/align.hpp"
#include "mmf3/config.hpp"
#include "mmf3/corpus.hpp"
#include "mmf3/errors.hpp"
#include "mmf3/gradcheck.hpp"
#include "mmf3/metrics.hpp"
#include "mmf3/model.hpp"
#include "mmf3/toy_corpus.hpp"
#include "mmf3/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mmf3;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kCheckpoint = 4, kNumeric = 5 };

// One string slot per config key; only keys given on the command line are merged.
struct ConfigFlags {
    std::string file;
    std::map<std::string, std::string> values;

    void attach(CLI::App& cmd) {
        cmd.add_option("--config", file, "JSON config file")->check(CLI::ExistingFile);
        const auto defaults = Config{}.to_json();
        for (const auto& item : defaults.items()) {
            const std::string key = item.key();
            cmd.add_option("--" + key, values[key], "override config key " + key);
        }
    }

    Config resolve(const CLI::App& cmd) const {
        Config cfg;
        if (!file.empty()) cfg = Config::from_file(file);
        const auto defaults = Config{}.to_json();
        json overrides = json::object();
        for (const auto& [key, text] : values) {
            if (cmd.count("--" + key) == 0) continue;
            const auto& kind = defaults.at(key);
            try {
                if (kind.is_string())
                    overrides[key] = text;
                else if (kind.is_number_unsigned())
                    overrides[key] = std::stoull(text);
                else if (kind.is_number_integer())
                    overrides[key] = std::stoll(text);
                else
                    overrides[key] = std::stod(text);
            } catch (const std::logic_error&) {
                throw std::invalid_argument("bad value for --" + key + ": " + text);
            }
        }
        cfg.merge_json(overrides);
        cfg.validate();
        return cfg;
    }
};

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_samples(const std::vector<corpus::Sample>& samples, const fs::path& path) {
    toy::write_dataset(samples, path);
}

int run_preprocess(const fs::path& input, const fs::path& out_dir, const Config& cfg) {
    corpus::LoadStats stats;
    auto samples = corpus::load_dataset(input, &stats);
    const auto split = corpus::split_dataset(samples, cfg.train_fraction, cfg.valid_fraction, cfg.seed);
    fs::create_directories(out_dir);
    write_samples(split.train, out_dir / "train.jsonl");
    write_samples(split.valid, out_dir / "valid.jsonl");
    write_samples(split.test, out_dir / "test.jsonl");

    const auto vocabs = build_vocabs(split.train, cfg);
    vocabs.code.save(out_dir / "code_vocab.json");
    vocabs.summary.save(out_dir / "summary_vocab.json");

    std::ofstream encoded(out_dir / "encoded.jsonl");
    if (!encoded) throw DataError("cannot write " + (out_dir / "encoded.jsonl").string());
    const std::pair<const char*, const std::vector<corpus::Sample>*> parts[] = {
        {"train", &split.train}, {"valid", &split.valid}, {"test", &split.test}};
    for (const auto& [name, set] : parts) {
        for (const auto& s : *set) {
            const auto ex = make_example(s, vocabs.code, vocabs.summary, cfg);
            encoded << json{{"split", name},
                            {"id", ex.id},
                            {"code_ids", ex.code_ids},
                            {"nodes", ex.nodes()},
                            {"summary_ids", ex.summary_ids},
                            {"match", align::to_json(ex.match)}}
                           .dump()
                    << '\n';
        }
    }
    write_json(cfg.to_json(), out_dir / "config.json");

    std::cout << "read " << stats.lines << " lines, kept " << stats.kept << " (dropped " << stats.dropped_empty_summary
              << " empty summaries, " << stats.dropped_empty_code << " empty code)\n"
              << "split train/valid/test = " << split.train.size() << "/" << split.valid.size() << "/"
              << split.test.size() << "\n"
              << "vocab code/summary = " << vocabs.code.size() << "/" << vocabs.summary.size() << "\n";
    return kOk;
}

int run_train(const fs::path& data_dir, const fs::path& checkpoint, const fs::path& log_path, const Config& cfg) {
    const auto train_set = corpus::load_dataset(data_dir / "train.jsonl");
    const auto valid_set = corpus::load_dataset(data_dir / "valid.jsonl");
    std::ofstream log(log_path);
    if (!log) throw DataError("cannot write " + log_path.string());
    log << "epoch,train_loss,valid_loss,improved\n" << std::setprecision(10);
    const auto result = train(train_set, valid_set, cfg, [&](const EpochRecord& r) {
        log << r.epoch << ',' << r.train_loss << ',' << r.valid_loss << ',' << (r.improved ? 1 : 0) << '\n';
        log.flush();
        std::cout << "epoch " << r.epoch << "  train " << r.train_loss << "  valid " << r.valid_loss
                  << (r.improved ? "  *" : "") << '\n';
    });
    save_checkpoint(result.best, checkpoint);
    std::cout << "best epoch " << result.best_epoch << " (valid " << result.best.best_valid << ")"
              << (result.stopped_early ? ", stopped early" : "") << "\nwrote " << checkpoint.string() << '\n';
    return kOk;
}

int run_summarize(const fs::path& checkpoint, const fs::path& input, const fs::path& output, int beam) {
    const auto ckpt = load_checkpoint(checkpoint);
    const auto model = restore(ckpt);
    const auto samples = corpus::load_dataset(input);
    std::vector<Prediction> predictions;
    for (const auto& s : samples) {
        const auto ex = make_example(s, ckpt.code_vocab, ckpt.summary_vocab, ckpt.config);
        const auto hyp = model.summarize(ex, beam);
        predictions.push_back({s.id, join_tokens(detokenize(hyp.tokens, ckpt.summary_vocab)),
                               join_tokens(corpus::tokenize_summary(s.summary))});
    }
    write_predictions(predictions, output);
    std::cout << "wrote " << predictions.size() << " predictions to " << output.string() << '\n';
    return kOk;
}

int run_evaluate(const fs::path& predictions_path, const fs::path& output) {
    const auto predictions = read_predictions(predictions_path);
    if (predictions.empty()) throw DataError("no predictions in " + predictions_path.string());
    std::vector<metrics::Sentence> candidates, references;
    for (const auto& p : predictions) {
        candidates.push_back(split_tokens(p.prediction));
        references.push_back(split_tokens(p.reference));
    }
    const auto report = metrics::score(candidates, references);
    if (!output.empty()) write_json(report.to_json(), output);
    std::cout << report.table();
    return kOk;
}

int run_match(const fs::path& input, const std::string& id, std::size_t index) {
    const auto samples = corpus::load_dataset(input);
    const corpus::Sample* chosen = nullptr;
    if (!id.empty()) {
        for (const auto& s : samples)
            if (s.id == id) chosen = &s;
        if (!chosen) throw DataError("no sample with id " + id);
    } else {
        if (index >= samples.size()) throw DataError("sample index " + std::to_string(index) + " out of range");
        chosen = &samples[index];
    }
    const auto map = align::build_match_map(*chosen->tree, corpus::tokenize_code(chosen->code));
    std::cout << align::to_json(map).dump() << '\n';
    return kOk;
}

int run_gradcheck(std::uint64_t seed) {
    bool ok = true;
    for (const auto& r : run_gradcheck_suite(seed)) {
        const bool pass = r.max_rel_error < 1e-4;
        ok = ok && pass;
        std::printf("%-28s max_rel_error %.3e  (%zu entries)  %s\n", r.name.c_str(), r.max_rel_error, r.entries,
                    pass ? "ok" : "FAIL");
    }
    return ok ? kOk : kNumeric;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MMF3 code summarization"};
    app.require_subcommand(1);

    auto* pre = app.add_subcommand("preprocess", "validate, split and encode a dataset");
    fs::path pre_input, pre_out;
    ConfigFlags pre_cfg;
    pre->add_option("--input", pre_input, "dataset JSONL")->required()->check(CLI::ExistingFile);
    pre->add_option("--out", pre_out, "output directory")->required();
    pre_cfg.attach(*pre);

    auto* tr = app.add_subcommand("train", "train a model on a preprocessed directory");
    fs::path tr_data, tr_ckpt, tr_log;
    ConfigFlags tr_cfg;
    tr->add_option("--data", tr_data, "directory written by preprocess")->required()->check(CLI::ExistingDirectory);
    tr->add_option("--checkpoint", tr_ckpt, "checkpoint to write")->required();
    tr->add_option("--log", tr_log, "per-epoch CSV log")->required();
    tr_cfg.attach(*tr);

    auto* su = app.add_subcommand("summarize", "generate summaries for a dataset");
    fs::path su_ckpt, su_input, su_out;
    int su_beam = 1;
    su->add_option("--checkpoint", su_ckpt)->required();
    su->add_option("--input", su_input, "dataset JSONL")->required();
    su->add_option("--out", su_out, "predictions JSONL")->required();
    su->add_option("--beam", su_beam, "beam size (1 = greedy)")->check(CLI::PositiveNumber);

    auto* ev = app.add_subcommand("evaluate", "score a predictions file");
    fs::path ev_input, ev_out;
    ev->add_option("--predictions", ev_input)->required();
    ev->add_option("--out", ev_out, "ScoreReport JSON");

    auto* ma = app.add_subcommand("match", "print the leaf-to-token match map of one sample");
    fs::path ma_input;
    std::string ma_id;
    std::size_t ma_index = 0;
    ma->add_option("--input", ma_input, "dataset JSONL")->required();
    auto* id_opt = ma->add_option("--id", ma_id);
    ma->add_option("--index", ma_index)->excludes(id_opt);

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every layer");
    std::uint64_t gc_seed = 7;
    gc->add_option("--seed", gc_seed);

    auto* toy_cmd = app.add_subcommand("toy", "write the synthetic toy corpus");
    fs::path toy_out;
    std::size_t toy_count = 200;
    std::uint64_t toy_seed = 2024;
    toy_cmd->add_option("--out", toy_out)->required();
    toy_cmd->add_option("--count", toy_count);
    toy_cmd->add_option("--seed", toy_seed);
    bool toy_match = false;
    toy_cmd->add_flag("--match-example", toy_match, "write only the leaf-matching example");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*pre) return run_preprocess(pre_input, pre_out, pre_cfg.resolve(*pre));
        if (*tr) return run_train(tr_data, tr_ckpt, tr_log, tr_cfg.resolve(*tr));
        if (*su) return run_summarize(su_ckpt, su_input, su_out, su_beam);
        if (*ev) return run_evaluate(ev_input, ev_out);
        if (*ma) return run_match(ma_input, ma_id, ma_index);
        if (*gc) return run_gradcheck(gc_seed);
        if (*toy_cmd) {
            toy::write_dataset(toy_match ? std::vector{toy::matching_example()} : toy::generate(toy_count, toy_seed),
                               toy_out);
            return kOk;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kCheckpoint;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const ast::AstError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
