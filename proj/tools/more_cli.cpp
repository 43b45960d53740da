// more: synth | train | pipeline | eval | encode
//
// Exit codes: 0 success, 1 validation/usage error, 2 runtime or divergence error.

#include "more/error.hpp"
#include "more/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct RunFlags {
    std::string config_path;
    std::vector<std::string> settings;
    bool no_vat = false;
    std::optional<int> random_split;
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("config", f.config_path, "key = value config file (optional; --set can supply every key)");
    cmd->add_option("--set", f.settings, "override one key, e.g. --set train.num_steps=500")->take_all();
    cmd->add_flag("--no-vat", f.no_vat, "disable virtual adversarial training");
    cmd->add_option("--random-split", f.random_split, "hold out N labels drawn from the seed")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", f.output_dir, "output directory");
    cmd->add_option("--seed", f.seed, "global seed");
}

more::RunConfig resolve(const RunFlags& f) {
    more::RunConfig cfg = f.config_path.empty() ? more::RunConfig{} : more::load_run_config(f.config_path);
    for (const auto& s : f.settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw more::ValidationError(fmt::format("--set expects key=value, got '{}'", s));
        auto trim = [](std::string v) {
            const auto b = v.find_first_not_of(" \t");
            const auto e = v.find_last_not_of(" \t");
            return b == std::string::npos ? std::string{} : v.substr(b, e - b + 1);
        };
        more::apply_setting(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (f.no_vat) cfg.vat_enabled = false;
    if (f.random_split) {
        cfg.split.train_labels.clear();
        cfg.split.novel_labels.clear();
        cfg.split.random_novel = *f.random_split;
    }
    if (f.output_dir) cfg.output_dir = *f.output_dir;
    if (f.seed) cfg.seed = *f.seed;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-set relation embedding: train with ranked list loss, cluster novel classes, score with B3"};
    app.require_subcommand(1);

    more::SynthConfig synth;
    std::uint64_t synth_seed = 42;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic labeled corpus (JSONL)");
    synth_cmd->add_option("--classes", synth.num_classes, "number of classes")->check(CLI::Range(2, 1 << 20));
    synth_cmd->add_option("--per-class", synth.per_class, "instances per class")->check(CLI::Range(2, 1 << 24));
    synth_cmd->add_option("--vocab-size", synth.vocab_size, "token inventory size");
    synth_cmd->add_option("--noise", synth.noise, "distractor probability")->check(CLI::Range(0.0, 1.0));
    synth_cmd->add_option("--min-len", synth.min_len);
    synth_cmd->add_option("--max-len", synth.max_len);
    synth_cmd->add_option("--seed", synth_seed);
    synth_cmd->add_option("--out", synth_out, "output corpus path")->required();

    RunFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "train an encoder on the training split");
    add_run_flags(train_cmd, train_flags);

    RunFlags pipe_flags;
    auto* pipe_cmd = app.add_subcommand("pipeline", "train (or load), encode novel split, cluster, score");
    add_run_flags(pipe_cmd, pipe_flags);

    std::string pred_path;
    std::string gold_path;
    std::string metrics_out;
    auto* eval_cmd = app.add_subcommand("eval", "score an assignment CSV against a gold corpus");
    eval_cmd->add_option("--pred", pred_path, "assignment CSV (instance_index,cluster_id)")->required();
    eval_cmd->add_option("--gold", gold_path, "gold JSONL corpus aligned by line index")->required();
    eval_cmd->add_option("--out", metrics_out, "write metrics JSON here");

    std::string ck_path;
    std::string vocab_path;
    std::string corpus_path;
    std::string reps_out;
    bool markers = false;
    auto* enc_cmd = app.add_subcommand("encode", "dump representations for a corpus");
    enc_cmd->add_option("--checkpoint", ck_path)->required();
    enc_cmd->add_option("--vocab", vocab_path)->required();
    enc_cmd->add_option("--corpus", corpus_path)->required();
    enc_cmd->add_option("--out", reps_out, "representation CSV")->required();
    enc_cmd->add_flag("--entity-markers", markers, "insert entity marker tokens before encoding");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*synth_cmd) {
            const auto res = more::run_synth(synth, synth_seed, synth_out);
            fmt::print("wrote {} instances over {} classes to {}\n", res.data.size(), res.data.label_set().size(),
                       synth_out);
        } else if (*train_cmd) {
            const auto res = more::run_train(resolve(train_flags), std::cout);
            fmt::print("checkpoint: {}\n", (res.resolved.output_dir / "checkpoint.bin").string());
        } else if (*pipe_cmd) {
            more::run_pipeline(resolve(pipe_flags), std::cout);
        } else if (*eval_cmd) {
            const auto s = more::run_eval(pred_path, gold_path);
            fmt::print("{}", more::metrics_text(s));
            if (!metrics_out.empty()) more::write_metrics(metrics_out, s);
        } else if (*enc_cmd) {
            const auto reps = more::run_encode(ck_path, vocab_path, corpus_path, markers);
            more::write_representations_csv(reps_out, reps);
            fmt::print("wrote {} x {} representations to {}\n", reps.rows, reps.cols, reps_out);
        }
    } catch (const more::ValidationError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    } catch (const more::DivergenceError& e) {
        fmt::print(stderr, "diverged at step {}: {}\n", e.step(), e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 0;
}
