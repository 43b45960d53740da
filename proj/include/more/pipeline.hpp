#pragma once

#include "more/clustering.hpp"
#include "more/config.hpp"
#include "more/data.hpp"
#include "more/encoder.hpp"
#include "more/eval.hpp"
#include "more/trainer.hpp"

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace more {

/// Train/novel partition of a corpus by label.
struct Split {
    std::vector<std::string> train_labels;  // sorted
    std::vector<std::string> novel_labels;  // sorted
    Dataset train;
    Dataset novel;
};

/// Resolves the split from explicit lists or a seeded random draw. Labels
/// not listed anywhere are ignored. Throws if a novel-label instance would
/// reach the training set.
Split make_split(const Dataset& corpus, const SplitConfig& cfg, std::uint64_t seed);

/// Encodes every instance (in chunks) and returns rows in input order.
Matrix encode_dataset(const EncoderParams& params, const EncoderConfig& cfg, const Vocabulary& vocab,
                      const Dataset& data, Exec exec = Exec::parallel);

/// CSV: instance_index,r0,...,r{hidden_dim-1} with round-trip precision.
void write_representations_csv(const std::filesystem::path& path, const Matrix& reps);

struct SynthOutcome {
    Dataset data;
};

SynthOutcome run_synth(const SynthConfig& cfg, std::uint64_t seed, const std::filesystem::path& out);

struct TrainOutcome {
    RunConfig resolved;
    Split split;
    Vocabulary vocab;
    EncoderConfig encoder;
    EncoderParams params;
    std::vector<StepRecord> history;
};

/// Loads the corpus, splits, builds the vocabulary over the whole corpus,
/// trains on the training split only, and writes checkpoint.bin, vocab.txt,
/// history.csv, split.cfg and manifest.cfg into output_dir.
TrainOutcome run_train(const RunConfig& cfg, std::ostream& log);

struct PipelineOutcome {
    B3Scores scores;
    ClusterAssignment assignment;
    Matrix representations;
    double bandwidth = 0.0;  // meanshift only
};

/// Trains (or loads `checkpoint` + `vocab`), encodes the novel split,
/// clusters it, scores against gold labels and writes novel.jsonl,
/// assignments.csv, representations.csv, metrics.json and metrics.txt.
PipelineOutcome run_pipeline(const RunConfig& cfg, std::ostream& log);

/// Clusters representations per the config and scores them; no files.
PipelineOutcome cluster_and_score(const Matrix& reps, const std::vector<int>& gold,
                                  const ClusterConfig& cfg, std::uint64_t seed);

/// Scores an assignment CSV against a gold corpus aligned by instance index.
B3Scores run_eval(const std::filesystem::path& assignments, const std::filesystem::path& gold_corpus);

/// Encodes a corpus with a stored checkpoint and vocabulary.
Matrix run_encode(const std::filesystem::path& checkpoint, const std::filesystem::path& vocab,
                  const std::filesystem::path& corpus, bool entity_markers);

} // namespace more
