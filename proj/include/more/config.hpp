#pragma once

#include "more/encoder.hpp"
#include "more/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace more {

enum class ClusterMethod { kmeans, meanshift };

struct ClusterConfig {
    ClusterMethod method = ClusterMethod::kmeans;
    int k = 16;
    int restarts = 8;
    int max_iter = 300;
    double tol = 1e-6;
    double bandwidth_quantile = 0.3;
};

/// Explicit label lists. When both are empty and random_novel > 0, a split
/// is drawn from the seed with that many novel labels.
struct SplitConfig {
    std::vector<std::string> train_labels;
    std::vector<std::string> novel_labels;
    int random_novel = 0;
};

/// Everything a train/pipeline run needs. Parsed from a `key = value` file
/// (one setting per line, `#` comments); see README for the key list.
struct RunConfig {
    std::filesystem::path corpus;
    std::filesystem::path output_dir = "run";
    std::optional<std::filesystem::path> checkpoint;  // pipeline: skip training
    std::optional<std::filesystem::path> vocab;       // required with checkpoint
    std::uint64_t seed = 42;
    bool entity_markers = false;
    int min_freq = 1;
    EncoderConfig encoder;  // vocab_size is filled in from the vocabulary
    TrainConfig train;
    bool vat_enabled = true;
    ClusterConfig cluster;
    SplitConfig split;

    RunConfig();
};

/// Applies one setting; throws ConfigError naming the key on unknown keys
/// or unparsable values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Parses a config file body on top of `base`.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Validates every key before any work starts. `needs_novel` adds the
/// pipeline requirements.
void validate_run_config(const RunConfig& cfg, bool needs_novel);

/// Canonical `key = value` rendering; parse_run_config(render(c)) == c.
std::string render_run_config(const RunConfig& cfg);

/// Every accepted key, in rendering order.
std::vector<std::string> config_keys();

} // namespace more
