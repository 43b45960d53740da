#include "more/eval.hpp"

#include "more/error.hpp"

#include <fstream>
#include <map>
#include <unordered_map>

#include <fmt/format.h>

#include "json.hpp"

namespace more {

B3Scores b3_scores(std::span<const int> predicted, std::span<const int> gold) {
    if (predicted.size() != gold.size()) {
        throw ValidationError(fmt::format("b3: {} predictions for {} gold labels", predicted.size(),
                                          gold.size()));
    }
    if (predicted.empty()) throw ValidationError("b3: empty input");

    std::unordered_map<int, std::size_t> cluster_size;
    std::unordered_map<int, std::size_t> class_size;
    std::map<std::pair<int, int>, std::size_t> joint;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        ++cluster_size[predicted[i]];
        ++class_size[gold[i]];
        ++joint[{predicted[i], gold[i]}];
    }

    double p = 0.0;
    double r = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const auto both = static_cast<double>(joint[{predicted[i], gold[i]}]);
        p += both / static_cast<double>(cluster_size[predicted[i]]);
        r += both / static_cast<double>(class_size[gold[i]]);
    }
    const auto n = static_cast<double>(predicted.size());
    B3Scores s;
    s.precision = p / n;
    s.recall = r / n;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

B3Scores b3_scores(const ClusterAssignment& predicted, std::span<const int> gold) {
    return b3_scores(std::span<const int>(predicted.cluster_ids), gold);
}

std::vector<int> dense_labels(std::span<const std::string> labels) {
    std::unordered_map<std::string, int> ids;
    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        const auto [it, inserted] = ids.try_emplace(l, static_cast<int>(ids.size()));
        out.push_back(it->second);
    }
    return out;
}

std::string metrics_json(const B3Scores& s) {
    nlohmann::ordered_json j;
    j["b3_precision"] = s.precision;
    j["b3_recall"] = s.recall;
    j["b3_f1"] = s.f1;
    return j.dump(2) + "\n";
}

std::string metrics_text(const B3Scores& s) {
    return fmt::format("B3 precision: {:.4f}\nB3 recall:    {:.4f}\nB3 F1:        {:.4f}\n", s.precision,
                       s.recall, s.f1);
}

void write_metrics(const std::filesystem::path& json_path, const B3Scores& s) {
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", json_path.string()));
    out << metrics_json(s);
}

} // namespace more
