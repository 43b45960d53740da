#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace more {

using Rng = std::mt19937_64;

/// Inclusive token range [start, end].
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const Span&) const = default;
};

/// One labeled sentence with a head and a tail entity mention.
struct Instance {
    std::vector<std::string> tokens;
    Span head;
    Span tail;
    std::optional<std::string> label;

    bool operator==(const Instance&) const = default;
};

/// Throws ValidationError("invalid span ...") when either span is out of
/// range, reversed, or the two spans overlap.
void validate_instance(const Instance& inst);

class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<Instance> instances);

    const std::vector<Instance>& instances() const { return instances_; }
    const std::set<std::string>& label_set() const { return label_set_; }
    std::size_t size() const { return instances_.size(); }
    bool empty() const { return instances_.empty(); }
    const Instance& operator[](std::size_t i) const { return instances_[i]; }

    /// Distinct labels in order of first appearance.
    std::vector<std::string> labels_in_order() const;

    /// Instances whose label is in `keep`, original order preserved.
    Dataset filter_labels(const std::set<std::string>& keep) const;

private:
    std::vector<Instance> instances_;
    std::set<std::string> label_set_;
};

// ---- corpus files -------------------------------------------------------

/// Reads a JSONL corpus (keys: tokens, h, t, relation?). Blank lines are
/// skipped. Errors name the 1-based line number and 0-based instance index.
Dataset load_jsonl(const std::filesystem::path& path);
Dataset parse_jsonl(std::istream& in);

std::string instance_to_json_line(const Instance& inst);
void save_jsonl(const Dataset& data, const std::filesystem::path& path);

// ---- preprocessing ------------------------------------------------------

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kE1Start = "[E1_start]";
inline constexpr const char* kE1End = "[E1_end]";
inline constexpr const char* kE2Start = "[E2_start]";
inline constexpr const char* kE2End = "[E2_end]";

/// Wraps the head span in [E1_start]/[E1_end] and the tail span in
/// [E2_start]/[E2_end]. Returned spans cover the original entity tokens,
/// not the markers. Must not be applied twice.
Instance insert_entity_markers(const Instance& inst);
Dataset insert_entity_markers(const Dataset& data);

class Vocabulary {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kUnk = 1;
    static constexpr std::int32_t kE1StartId = 2;
    static constexpr std::int32_t kE1EndId = 3;
    static constexpr std::int32_t kE2StartId = 4;
    static constexpr std::int32_t kE2EndId = 5;
    static constexpr std::size_t kNumSpecial = 6;

    /// Only the special tokens.
    Vocabulary();

    std::int32_t id(const std::string& token) const;
    bool contains(const std::string& token) const { return index_.contains(token); }
    const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Appends a token if absent; returns its id.
    std::int32_t add(const std::string& token);

    /// One token per line, line number = id.
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> index_;
};

/// Tokens with corpus frequency >= min_freq, ids in first-appearance order
/// after the six special tokens.
Vocabulary build_vocab(const Dataset& data, int min_freq);

// ---- episodic sampling --------------------------------------------------

struct SamplerConfig {
    int num_classes_per_batch = 24;
    int instances_per_class = 10;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t batch_size() const {
        return static_cast<std::size_t>(num_classes_per_batch) *
               static_cast<std::size_t>(instances_per_class);
    }
};

/// Label-indexed view of a dataset for repeated episode draws.
class EpisodeSampler {
public:
    EpisodeSampler(const Dataset& data, SamplerConfig cfg);

    /// Indices into the dataset: c classes drawn without replacement, k
    /// instances each, grouped by class. Classes with fewer than k members
    /// are drawn with replacement.
    std::vector<std::size_t> sample_indices(Rng& rng) const;

    std::size_t num_classes() const { return members_.size(); }

private:
    SamplerConfig cfg_;
    std::vector<std::vector<std::size_t>> members_;
};

std::vector<Instance> sample_episode(const Dataset& data, const SamplerConfig& cfg, Rng& rng);

// ---- tensor encoding ----------------------------------------------------

/// Integer inputs for one batch. All matrices are m x max_len, row-major.
struct EncodedBatch {
    std::size_t rows = 0;
    std::size_t max_len = 0;
    std::vector<std::int32_t> token_ids;
    std::vector<std::int32_t> head_positions;  // offset + max_offset, in [0, 2*max_offset]
    std::vector<std::int32_t> tail_positions;
    std::vector<std::int32_t> labels;          // dense ids, -1 when unlabeled
    std::vector<std::string> label_names;      // dense id -> label
    std::size_t truncated_entities = 0;        // instances that lost an entity to truncation

    std::int32_t token(std::size_t r, std::size_t t) const { return token_ids[r * max_len + t]; }
    bool valid(std::size_t r, std::size_t t) const { return token(r, t) != 0; }
};

/// Pads or truncates (keeping the first max_len tokens) and computes the two
/// relative-position channels, clipped to +-max_offset.
EncodedBatch encode_inputs(const std::vector<Instance>& insts, const Vocabulary& vocab,
                           std::size_t max_len, std::size_t max_offset);

// ---- synthetic corpora --------------------------------------------------

struct SynthConfig {
    int num_classes = 16;
    int per_class = 100;
    int vocab_size = 200;
    double noise = 0.1;
    int min_len = 10;
    int max_len = 18;
};

/// Each class owns a disjoint signature vocabulary; every token is a shared
/// distractor with probability `noise`, otherwise a signature token of the
/// instance's class. Entities sit on two signature tokens.
Dataset synth_generate(const SynthConfig& cfg, Rng& rng);

} // namespace more
