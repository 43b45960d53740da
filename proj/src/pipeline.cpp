#include "more/pipeline.hpp"

#include "more/error.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace more {

namespace {

constexpr std::uint64_t kSplitStream = 7;
constexpr std::uint64_t kClusterStream = 8;
constexpr std::size_t kEncodeChunk = 256;

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    out << text;
}

std::vector<int> gold_ids(const Dataset& data) {
    std::vector<std::string> labels;
    labels.reserve(data.size());
    for (const auto& inst : data.instances()) {
        if (!inst.label) throw ValidationError("every evaluated instance needs a gold label");
        labels.push_back(*inst.label);
    }
    return dense_labels(labels);
}

TrainConfig resolved_train_config(const RunConfig& cfg) {
    TrainConfig t = cfg.train;
    t.seed = cfg.seed;
    t.sampler.seed = cfg.seed;
    if (!cfg.vat_enabled) t.vat.reset();
    return t;
}

} // namespace

Split make_split(const Dataset& corpus, const SplitConfig& cfg, std::uint64_t seed) {
    Split s;
    if (cfg.random_novel > 0) {
        std::vector<std::string> labels = corpus.labels_in_order();
        if (labels.size() < static_cast<std::size_t>(cfg.random_novel) + 2) {
            throw ConfigError("split.random_novel",
                              fmt::format("corpus has {} labels; cannot hold out {} and still train",
                                          labels.size(), cfg.random_novel));
        }
        Rng rng = make_rng(seed, kSplitStream);
        std::shuffle(labels.begin(), labels.end(), rng);
        s.novel_labels.assign(labels.begin(), labels.begin() + cfg.random_novel);
        s.train_labels.assign(labels.begin() + cfg.random_novel, labels.end());
    } else {
        s.novel_labels = cfg.novel_labels;
        s.train_labels = cfg.train_labels;
        if (s.train_labels.empty()) {
            const std::set<std::string> novel(s.novel_labels.begin(), s.novel_labels.end());
            for (const auto& l : corpus.labels_in_order()) {
                if (!novel.contains(l)) s.train_labels.push_back(l);
            }
        }
    }
    std::sort(s.train_labels.begin(), s.train_labels.end());
    std::sort(s.novel_labels.begin(), s.novel_labels.end());

    const std::set<std::string> train(s.train_labels.begin(), s.train_labels.end());
    const std::set<std::string> novel(s.novel_labels.begin(), s.novel_labels.end());
    for (const auto& l : novel) {
        if (train.contains(l)) throw ValidationError(fmt::format("label '{}' is in both splits", l));
        if (!corpus.label_set().contains(l)) {
            throw ConfigError("split.novel_labels", fmt::format("label '{}' does not occur in the corpus", l));
        }
    }
    for (const auto& l : train) {
        if (!corpus.label_set().contains(l)) {
            throw ConfigError("split.train_labels", fmt::format("label '{}' does not occur in the corpus", l));
        }
    }
    s.train = corpus.filter_labels(train);
    s.novel = corpus.filter_labels(novel);
    for (const auto& inst : s.train.instances()) {
        if (novel.contains(*inst.label)) throw std::logic_error("open-set contract violated by split");
    }
    return s;
}

Matrix encode_dataset(const EncoderParams& params, const EncoderConfig& cfg, const Vocabulary& vocab,
                      const Dataset& data, Exec exec) {
    Matrix out(data.size(), cfg.hidden_dim);
    for (std::size_t begin = 0; begin < data.size(); begin += kEncodeChunk) {
        const std::size_t end = std::min(data.size(), begin + kEncodeChunk);
        const std::vector<Instance> chunk(data.instances().begin() + static_cast<long>(begin),
                                          data.instances().begin() + static_cast<long>(end));
        const EncodedBatch batch = encode_inputs(chunk, vocab, cfg.max_len, cfg.max_offset);
        const Matrix reps = forward(params, cfg, batch, nullptr, exec).representations;
        std::copy(reps.data.begin(), reps.data.end(), out.data.begin() + static_cast<long>(begin * cfg.hidden_dim));
    }
    return out;
}

void write_representations_csv(const std::filesystem::path& path, const Matrix& reps) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    out << "instance_index";
    for (std::size_t k = 0; k < reps.cols; ++k) out << ",r" << k;
    out << '\n';
    for (std::size_t i = 0; i < reps.rows; ++i) {
        out << i;
        for (double v : reps.row(i)) out << fmt::format(",{:.17g}", v);
        out << '\n';
    }
}

SynthOutcome run_synth(const SynthConfig& cfg, std::uint64_t seed, const std::filesystem::path& out) {
    Rng rng = make_rng(seed, 0);
    SynthOutcome res{synth_generate(cfg, rng)};
    save_jsonl(res.data, out);
    return res;
}

TrainOutcome run_train(const RunConfig& cfg, std::ostream& log) {
    validate_run_config(cfg, false);
    TrainOutcome res;
    res.resolved = cfg;

    Dataset corpus = load_jsonl(cfg.corpus);
    if (cfg.entity_markers) corpus = insert_entity_markers(corpus);
    res.split = make_split(corpus, cfg.split, cfg.seed);
    res.resolved.split.train_labels = res.split.train_labels;
    res.resolved.split.novel_labels = res.split.novel_labels;
    res.resolved.split.random_novel = 0;

    // Token inventory only; labels of the novel split never reach training.
    res.vocab = build_vocab(corpus, cfg.min_freq);
    res.encoder = cfg.encoder;
    res.encoder.vocab_size = res.vocab.size();

    std::filesystem::create_directories(cfg.output_dir);
    TrainConfig tcfg = resolved_train_config(cfg);
    tcfg.checkpoint_path = cfg.output_dir / "checkpoint.bin";

    write_text(cfg.output_dir / "manifest.cfg", render_run_config(res.resolved));
    write_text(cfg.output_dir / "split.cfg",
               fmt::format("split.train_labels = {}\nsplit.novel_labels = {}\n",
                               fmt::join(res.split.train_labels, ","), fmt::join(res.split.novel_labels, ",")));
    res.vocab.save(cfg.output_dir / "vocab.txt");

    fmt::print(log, "training on {} instances ({} labels), vocabulary {}, {} steps{}\n",
               res.split.train.size(), res.split.train_labels.size(), res.vocab.size(), tcfg.num_steps,
               tcfg.vat ? " with VAT" : "");
    const long report = std::max<long>(1, tcfg.num_steps / 10);
    TrainResult tr = train(res.split.train, res.vocab, res.encoder, tcfg, [&](const StepRecord& r) {
        if (r.step % report == 0 || r.step == tcfg.num_steps) {
            fmt::print(log, "step {:>6}  rll {:.6f}  vat {:.6f}  total {:.6f}\n", r.step, r.rll_loss,
                       r.vat_loss, r.total_loss);
        }
    });
    res.params = std::move(tr.params);
    res.history = std::move(tr.history);
    write_history_csv(cfg.output_dir / "history.csv", res.history);
    return res;
}

PipelineOutcome cluster_and_score(const Matrix& reps, const std::vector<int>& gold, const ClusterConfig& cfg,
                                  std::uint64_t seed) {
    PipelineOutcome out;
    out.representations = reps;
    if (cfg.method == ClusterMethod::kmeans) {
        Rng rng = make_rng(seed, kClusterStream);
        out.assignment = kmeans(reps, {cfg.k, cfg.max_iter, cfg.restarts}, rng).assignment;
    } else {
        out.bandwidth = estimate_bandwidth(reps, cfg.bandwidth_quantile);
        out.assignment = mean_shift(reps, out.bandwidth, {cfg.max_iter, cfg.tol}).assignment;
    }
    out.scores = b3_scores(out.assignment, gold);
    return out;
}

PipelineOutcome run_pipeline(const RunConfig& cfg, std::ostream& log) {
    validate_run_config(cfg, true);

    EncoderConfig enc;
    EncoderParams params;
    Vocabulary vocab;
    Dataset novel;
    if (cfg.checkpoint) {
        Checkpoint ck = load_checkpoint(*cfg.checkpoint);
        vocab = Vocabulary::load(*cfg.vocab);
        if (vocab.size() != ck.config.vocab_size) {
            throw ConfigError("vocab", "vocabulary size does not match the checkpoint");
        }
        enc = ck.config;
        params = std::move(ck.params);
        Dataset corpus = load_jsonl(cfg.corpus);
        if (cfg.entity_markers) corpus = insert_entity_markers(corpus);
        novel = make_split(corpus, cfg.split, cfg.seed).novel;
        std::filesystem::create_directories(cfg.output_dir);
        write_text(cfg.output_dir / "manifest.cfg", render_run_config(cfg));
    } else {
        TrainOutcome t = run_train(cfg, log);
        enc = t.encoder;
        params = std::move(t.params);
        vocab = std::move(t.vocab);
        novel = std::move(t.split.novel);
    }

    if (novel.label_set().size() < 2) {
        throw ValidationError("the novel split needs at least two classes");
    }
    const Matrix reps = encode_dataset(params, enc, vocab, novel);
    PipelineOutcome out = cluster_and_score(reps, gold_ids(novel), cfg.cluster, cfg.seed);

    save_jsonl(novel, cfg.output_dir / "novel.jsonl");
    write_assignment_csv(cfg.output_dir / "assignments.csv", out.assignment);
    write_representations_csv(cfg.output_dir / "representations.csv", reps);
    write_metrics(cfg.output_dir / "metrics.json", out.scores);
    write_text(cfg.output_dir / "metrics.txt", metrics_text(out.scores));

    fmt::print(log, "clustered {} novel instances ({} gold classes) into {} clusters\n", novel.size(),
               novel.label_set().size(), out.assignment.num_clusters);
    fmt::print(log, "{}", metrics_text(out.scores));
    return out;
}

B3Scores run_eval(const std::filesystem::path& assignments, const std::filesystem::path& gold_corpus) {
    const Dataset gold = load_jsonl(gold_corpus);
    if (gold.empty()) throw ValidationError("gold corpus is empty");
    const ClusterAssignment pred = read_assignment_csv(assignments, gold.size());
    return b3_scores(pred, gold_ids(gold));
}

Matrix run_encode(const std::filesystem::path& checkpoint, const std::filesystem::path& vocab_path,
                  const std::filesystem::path& corpus, bool entity_markers) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    const Vocabulary vocab = Vocabulary::load(vocab_path);
    if (vocab.size() != ck.config.vocab_size) {
        throw ValidationError("vocabulary size does not match the checkpoint");
    }
    Dataset data = load_jsonl(corpus);
    if (entity_markers) data = insert_entity_markers(data);
    return encode_dataset(ck.params, ck.config, vocab, data);
}

} // namespace more
