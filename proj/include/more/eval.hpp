#pragma once

#include "more/clustering.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace more {

struct B3Scores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    bool operator==(const B3Scores&) const = default;
};

/// Element-averaged B-cubed. For item i with predicted cluster C(i) and gold
/// class L(i): precision_i = |C(i) & L(i)| / |C(i)|, recall_i =
/// |C(i) & L(i)| / |L(i)|; P and R are plain means over items and F1 their
/// harmonic mean. Throws ValidationError on empty input or length mismatch.
B3Scores b3_scores(std::span<const int> predicted, std::span<const int> gold);
B3Scores b3_scores(const ClusterAssignment& predicted, std::span<const int> gold);

/// Maps string labels to dense ids by first appearance.
std::vector<int> dense_labels(std::span<const std::string> labels);

/// {"b3_precision": .., "b3_recall": .., "b3_f1": ..}
std::string metrics_json(const B3Scores& s);
std::string metrics_text(const B3Scores& s);
void write_metrics(const std::filesystem::path& json_path, const B3Scores& s);

} // namespace more
