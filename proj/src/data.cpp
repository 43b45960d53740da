#include "more/data.hpp"

#include "more/error.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

namespace more {

using json = nlohmann::json;

namespace {

bool spans_overlap(const Span& a, const Span& b) {
    return a.start <= b.end && b.start <= a.end;
}

Span parse_span(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw ValidationError(fmt::format("missing key '{}'", key));
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_integer() ||
        !(*it)[1].is_number_integer()) {
        throw ValidationError(fmt::format("key '{}' must be a two-integer array", key));
    }
    const auto s = (*it)[0].get<long long>();
    const auto e = (*it)[1].get<long long>();
    if (s < 0 || e < 0) throw ValidationError(fmt::format("invalid span: negative index in '{}'", key));
    return {static_cast<std::size_t>(s), static_cast<std::size_t>(e)};
}

Instance parse_instance(const json& j) {
    if (!j.is_object()) throw ValidationError("record is not a JSON object");
    Instance inst;
    const auto tok = j.find("tokens");
    if (tok == j.end() || !tok->is_array()) throw ValidationError("missing or non-array key 'tokens'");
    inst.tokens.reserve(tok->size());
    for (const auto& t : *tok) {
        if (!t.is_string()) throw ValidationError("'tokens' must contain only strings");
        inst.tokens.push_back(t.get<std::string>());
    }
    inst.head = parse_span(j, "h");
    inst.tail = parse_span(j, "t");
    if (const auto rel = j.find("relation"); rel != j.end() && !rel->is_null()) {
        if (!rel->is_string()) throw ValidationError("'relation' must be a string");
        inst.label = rel->get<std::string>();
    }
    return inst;
}

} // namespace

void validate_instance(const Instance& inst) {
    const std::size_t n = inst.tokens.size();
    auto check = [n](const Span& s, const char* which) {
        if (s.start > s.end || s.end >= n) {
            throw ValidationError(fmt::format("invalid span: {} ({}, {}) with {} tokens", which,
                                              s.start, s.end, n));
        }
    };
    check(inst.head, "head");
    check(inst.tail, "tail");
    if (spans_overlap(inst.head, inst.tail)) {
        throw ValidationError(fmt::format("invalid span: head ({}, {}) overlaps tail ({}, {})",
                                          inst.head.start, inst.head.end, inst.tail.start,
                                          inst.tail.end));
    }
}

// ---- Dataset ------------------------------------------------------------

Dataset::Dataset(std::vector<Instance> instances) : instances_(std::move(instances)) {
    for (const auto& inst : instances_) {
        if (inst.label) label_set_.insert(*inst.label);
    }
}

std::vector<std::string> Dataset::labels_in_order() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& inst : instances_) {
        if (inst.label && seen.insert(*inst.label).second) out.push_back(*inst.label);
    }
    return out;
}

Dataset Dataset::filter_labels(const std::set<std::string>& keep) const {
    std::vector<Instance> out;
    for (const auto& inst : instances_) {
        if (inst.label && keep.contains(*inst.label)) out.push_back(inst);
    }
    return Dataset(std::move(out));
}

// ---- JSONL --------------------------------------------------------------

Dataset parse_jsonl(std::istream& in) {
    std::vector<Instance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::size_t index = out.size();
        Instance inst;
        try {
            inst = parse_instance(json::parse(line));
            validate_instance(inst);
        } catch (const json::exception& e) {
            throw ValidationError(
                fmt::format("line {} (instance {}): malformed record: {}", line_no, index, e.what()));
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("line {} (instance {}): {}", line_no, index, e.what()));
        }
        out.push_back(std::move(inst));
    }
    return Dataset(std::move(out));
}

Dataset load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open corpus '{}'", path.string()));
    return parse_jsonl(in);
}

std::string instance_to_json_line(const Instance& inst) {
    json j;
    j["tokens"] = inst.tokens;
    j["h"] = {inst.head.start, inst.head.end};
    j["t"] = {inst.tail.start, inst.tail.end};
    if (inst.label) j["relation"] = *inst.label;
    return j.dump();
}

void save_jsonl(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    for (const auto& inst : data.instances()) out << instance_to_json_line(inst) << '\n';
    if (!out) throw std::runtime_error(fmt::format("write failed for '{}'", path.string()));
}

// ---- entity markers -----------------------------------------------------

Instance insert_entity_markers(const Instance& inst) {
    Instance out;
    out.label = inst.label;
    out.tokens.reserve(inst.tokens.size() + 4);
    for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
        if (i == inst.head.start) out.tokens.emplace_back(kE1Start);
        if (i == inst.tail.start) out.tokens.emplace_back(kE2Start);
        if (i == inst.head.start) out.head.start = out.tokens.size();
        if (i == inst.tail.start) out.tail.start = out.tokens.size();
        out.tokens.push_back(inst.tokens[i]);
        if (i == inst.head.end) {
            out.head.end = out.tokens.size() - 1;
            out.tokens.emplace_back(kE1End);
        }
        if (i == inst.tail.end) {
            out.tail.end = out.tokens.size() - 1;
            out.tokens.emplace_back(kE2End);
        }
    }
    return out;
}

Dataset insert_entity_markers(const Dataset& data) {
    std::vector<Instance> out;
    out.reserve(data.size());
    for (const auto& inst : data.instances()) out.push_back(insert_entity_markers(inst));
    return Dataset(std::move(out));
}

// ---- Vocabulary ---------------------------------------------------------

Vocabulary::Vocabulary() {
    for (const char* t : {kPadToken, kUnkToken, kE1Start, kE1End, kE2Start, kE2End}) add(t);
}

std::int32_t Vocabulary::id(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

std::int32_t Vocabulary::add(const std::string& token) {
    const auto [it, inserted] = index_.try_emplace(token, static_cast<std::int32_t>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open vocabulary '{}'", path.string()));
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    Vocabulary v;
    if (lines.size() < kNumSpecial) throw ValidationError("vocabulary file lacks special tokens");
    for (std::size_t i = 0; i < kNumSpecial; ++i) {
        if (lines[i] != v.tokens_[i]) {
            throw ValidationError(fmt::format("vocabulary line {} must be '{}'", i + 1, v.tokens_[i]));
        }
    }
    for (std::size_t i = kNumSpecial; i < lines.size(); ++i) {
        if (v.add(lines[i]) != static_cast<std::int32_t>(i)) {
            throw ValidationError(fmt::format("vocabulary line {}: duplicate token '{}'", i + 1, lines[i]));
        }
    }
    return v;
}

Vocabulary build_vocab(const Dataset& data, int min_freq) {
    if (min_freq < 1) throw ValidationError("min_freq must be >= 1");
    std::unordered_map<std::string, int> freq;
    std::vector<std::string> order;
    for (const auto& inst : data.instances()) {
        for (const auto& t : inst.tokens) {
            if (freq[t]++ == 0) order.push_back(t);
        }
    }
    Vocabulary v;
    for (const auto& t : order) {
        if (freq[t] >= min_freq) v.add(t);
    }
    return v;
}

// ---- sampling -----------------------------------------------------------

void SamplerConfig::validate() const {
    if (num_classes_per_batch < 2) throw ConfigError("sampler.classes_per_batch", "must be >= 2");
    if (instances_per_class < 2) throw ConfigError("sampler.instances_per_class", "must be >= 2");
}

EpisodeSampler::EpisodeSampler(const Dataset& data, SamplerConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& label = data[i].label;
        if (!label) continue;
        const auto [it, inserted] = slot.try_emplace(*label, members_.size());
        if (inserted) members_.emplace_back();
        members_[it->second].push_back(i);
    }
    if (members_.size() < static_cast<std::size_t>(cfg_.num_classes_per_batch)) {
        throw ValidationError(fmt::format("insufficient classes: need {}, dataset has {}",
                                          cfg_.num_classes_per_batch, members_.size()));
    }
}

std::vector<std::size_t> EpisodeSampler::sample_indices(Rng& rng) const {
    const auto c = static_cast<std::size_t>(cfg_.num_classes_per_batch);
    const auto k = static_cast<std::size_t>(cfg_.instances_per_class);

    // Partial Fisher-Yates over class slots.
    std::vector<std::size_t> classes(members_.size());
    std::iota(classes.begin(), classes.end(), std::size_t{0});
    for (std::size_t i = 0; i < c; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, classes.size() - 1);
        std::swap(classes[i], classes[pick(rng)]);
    }

    std::vector<std::size_t> out;
    out.reserve(c * k);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const auto& pool = members_[classes[ci]];
        if (pool.size() >= k) {
            std::vector<std::size_t> tmp = pool;
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, tmp.size() - 1);
                std::swap(tmp[i], tmp[pick(rng)]);
                out.push_back(tmp[i]);
            }
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            for (std::size_t i = 0; i < k; ++i) out.push_back(pool[pick(rng)]);
        }
    }
    return out;
}

std::vector<Instance> sample_episode(const Dataset& data, const SamplerConfig& cfg, Rng& rng) {
    const EpisodeSampler sampler(data, cfg);
    std::vector<Instance> out;
    for (std::size_t i : sampler.sample_indices(rng)) out.push_back(data[i]);
    return out;
}

// ---- encoding -----------------------------------------------------------

EncodedBatch encode_inputs(const std::vector<Instance>& insts, const Vocabulary& vocab,
                           std::size_t max_len, std::size_t max_offset) {
    if (max_len < 1) throw ValidationError("max_len must be >= 1");
    EncodedBatch b;
    b.rows = insts.size();
    b.max_len = max_len;
    b.token_ids.assign(b.rows * max_len, Vocabulary::kPad);
    b.head_positions.assign(b.rows * max_len, 0);
    b.tail_positions.assign(b.rows * max_len, 0);
    b.labels.assign(b.rows, -1);

    std::map<std::string, std::int32_t> dense;
    const auto off = static_cast<long>(max_offset);
    auto clip = [off](long v) { return static_cast<std::int32_t>(std::clamp(v, -off, off) + off); };

    for (std::size_t r = 0; r < b.rows; ++r) {
        const Instance& inst = insts[r];
        const std::size_t n = std::min(inst.tokens.size(), max_len);
        if (inst.head.end >= max_len || inst.tail.end >= max_len) ++b.truncated_entities;
        for (std::size_t t = 0; t < max_len; ++t) {
            const std::size_t at = r * max_len + t;
            if (t < n) b.token_ids[at] = vocab.id(inst.tokens[t]);
            b.head_positions[at] = clip(static_cast<long>(t) - static_cast<long>(inst.head.start));
            b.tail_positions[at] = clip(static_cast<long>(t) - static_cast<long>(inst.tail.start));
        }
        if (inst.label) {
            const auto [it, inserted] =
                dense.try_emplace(*inst.label, static_cast<std::int32_t>(b.label_names.size()));
            if (inserted) b.label_names.push_back(*inst.label);
            b.labels[r] = it->second;
        }
    }
    return b;
}

// ---- synthetic corpora --------------------------------------------------

Dataset synth_generate(const SynthConfig& cfg, Rng& rng) {
    if (cfg.num_classes < 2) throw ValidationError("num_classes must be >= 2");
    if (cfg.per_class < 2) throw ValidationError("per_class must be >= 2");
    if (cfg.noise < 0.0 || cfg.noise > 1.0) throw ValidationError("noise must be in [0, 1]");
    if (cfg.min_len < 2 || cfg.max_len < cfg.min_len) throw ValidationError("invalid sentence length range");

    const int distractors = std::max(1, cfg.vocab_size / 4);
    const int signature = (cfg.vocab_size - distractors) / cfg.num_classes;
    if (signature < 2) {
        throw ValidationError(fmt::format("vocab_size {} too small for {} classes", cfg.vocab_size,
                                          cfg.num_classes));
    }

    std::uniform_int_distribution<int> len_dist(cfg.min_len, cfg.max_len);
    std::uniform_int_distribution<int> sig_dist(0, signature - 1);
    std::uniform_int_distribution<int> dis_dist(0, distractors - 1);
    std::bernoulli_distribution is_noise(cfg.noise);

    std::vector<Instance> out;
    out.reserve(static_cast<std::size_t>(cfg.num_classes) * static_cast<std::size_t>(cfg.per_class));
    for (int c = 0; c < cfg.num_classes; ++c) {
        const std::string label = fmt::format("R{:03}", c);
        for (int i = 0; i < cfg.per_class; ++i) {
            Instance inst;
            inst.label = label;
            const auto len = static_cast<std::size_t>(len_dist(rng));
            for (std::size_t t = 0; t < len; ++t) {
                if (is_noise(rng)) {
                    inst.tokens.push_back(fmt::format("d{}", dis_dist(rng)));
                } else {
                    inst.tokens.push_back(fmt::format("c{}_{}", c, sig_dist(rng)));
                }
            }
            // Two distinct entity positions, each forced onto a signature token.
            std::uniform_int_distribution<std::size_t> pos(0, len - 1);
            const std::size_t h = pos(rng);
            std::size_t t = pos(rng);
            while (t == h) t = pos(rng);
            inst.tokens[h] = fmt::format("c{}_{}", c, sig_dist(rng));
            inst.tokens[t] = fmt::format("c{}_{}", c, sig_dist(rng));
            inst.head = {h, h};
            inst.tail = {t, t};
            out.push_back(std::move(inst));
        }
    }
    return Dataset(std::move(out));
}

} // namespace more
