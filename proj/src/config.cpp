#include "more/config.hpp"

#include "more/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace more {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end) {
        throw ConfigError(std::string(key), fmt::format("cannot parse '{}' as a number", v));
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(std::string(key), fmt::format("expected true/false, got '{}'", v));
}

std::vector<std::string> parse_list(std::string_view v) {
    std::vector<std::string> out;
    while (!v.empty()) {
        const auto comma = v.find(',');
        const auto item = trim(v.substr(0, comma));
        if (!item.empty()) out.emplace_back(item);
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) out += ",";
        out += items[i];
    }
    return out;
}

struct Field {
    const char* key;
    std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T, class Member>
Field number(const char* key, Member member) {
    return {key,
            [member](RunConfig& c, std::string_view k, std::string_view v) {
                std::invoke(member, c) = parse_number<T>(k, v);
            },
            // Accessors are written once, for the mutable case; reading is safe.
            [member](const RunConfig& c) {
                return fmt::format("{}", std::invoke(member, const_cast<RunConfig&>(c)));
            }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"corpus",
                     [](RunConfig& c, std::string_view, std::string_view v) { c.corpus = std::string(v); },
                     [](const RunConfig& c) { return c.corpus.string(); }});
        f.push_back({"output_dir",
                     [](RunConfig& c, std::string_view, std::string_view v) { c.output_dir = std::string(v); },
                     [](const RunConfig& c) { return c.output_dir.string(); }});
        f.push_back({"checkpoint",
                     [](RunConfig& c, std::string_view, std::string_view v) {
                         c.checkpoint = v.empty() ? std::nullopt : std::optional<std::filesystem::path>(std::string(v));
                     },
                     [](const RunConfig& c) { return c.checkpoint ? c.checkpoint->string() : std::string(); }});
        f.push_back({"vocab",
                     [](RunConfig& c, std::string_view, std::string_view v) {
                         c.vocab = v.empty() ? std::nullopt : std::optional<std::filesystem::path>(std::string(v));
                     },
                     [](const RunConfig& c) { return c.vocab ? c.vocab->string() : std::string(); }});
        f.push_back(number<std::uint64_t>("seed", [](RunConfig& c) -> auto& { return c.seed; }));
        f.push_back({"entity_markers",
                     [](RunConfig& c, std::string_view k, std::string_view v) { c.entity_markers = parse_bool(k, v); },
                     [](const RunConfig& c) { return std::string(c.entity_markers ? "true" : "false"); }});
        f.push_back(number<int>("min_freq", [](RunConfig& c) -> auto& { return c.min_freq; }));

        f.push_back(number<std::size_t>("encoder.word_dim", [](RunConfig& c) -> auto& { return c.encoder.word_dim; }));
        f.push_back(number<std::size_t>("encoder.position_dim", [](RunConfig& c) -> auto& { return c.encoder.position_dim; }));
        f.push_back(number<std::size_t>("encoder.num_filters", [](RunConfig& c) -> auto& { return c.encoder.num_filters; }));
        f.push_back(number<std::size_t>("encoder.kernel_width", [](RunConfig& c) -> auto& { return c.encoder.kernel_width; }));
        f.push_back(number<std::size_t>("encoder.hidden_dim", [](RunConfig& c) -> auto& { return c.encoder.hidden_dim; }));
        f.push_back(number<std::size_t>("encoder.max_len", [](RunConfig& c) -> auto& { return c.encoder.max_len; }));
        f.push_back(number<std::size_t>("encoder.max_offset", [](RunConfig& c) -> auto& { return c.encoder.max_offset; }));

        f.push_back(number<double>("train.learning_rate", [](RunConfig& c) -> auto& { return c.train.learning_rate; }));
        f.push_back(number<long>("train.num_steps", [](RunConfig& c) -> auto& { return c.train.num_steps; }));
        f.push_back(number<long>("train.eval_every", [](RunConfig& c) -> auto& { return c.train.eval_every; }));
        f.push_back(number<int>("sampler.classes_per_batch",
                                [](RunConfig& c) -> auto& { return c.train.sampler.num_classes_per_batch; }));
        f.push_back(number<int>("sampler.instances_per_class",
                                [](RunConfig& c) -> auto& { return c.train.sampler.instances_per_class; }));

        f.push_back(number<double>("loss.alpha_p", [](RunConfig& c) -> auto& { return c.train.loss.alpha_p; }));
        f.push_back(number<double>("loss.alpha_n", [](RunConfig& c) -> auto& { return c.train.loss.alpha_n; }));
        f.push_back(number<double>("loss.lambda", [](RunConfig& c) -> auto& { return c.train.loss.lambda; }));
        f.push_back(number<double>("loss.temperature", [](RunConfig& c) -> auto& { return c.train.loss.temperature; }));

        f.push_back({"vat.enabled",
                     [](RunConfig& c, std::string_view k, std::string_view v) { c.vat_enabled = parse_bool(k, v); },
                     [](const RunConfig& c) { return std::string(c.vat_enabled ? "true" : "false"); }});
        f.push_back(number<double>("vat.epsilon", [](RunConfig& c) -> auto& { return c.train.vat->epsilon; }));
        f.push_back(number<double>("vat.beta", [](RunConfig& c) -> auto& { return c.train.vat->beta; }));
        f.push_back(number<double>("vat.probe_scale", [](RunConfig& c) -> auto& { return c.train.vat->probe_scale; }));

        f.push_back({"cluster.method",
                     [](RunConfig& c, std::string_view k, std::string_view v) {
                         if (v == "kmeans") {
                             c.cluster.method = ClusterMethod::kmeans;
                         } else if (v == "meanshift") {
                             c.cluster.method = ClusterMethod::meanshift;
                         } else {
                             throw ConfigError(std::string(k), fmt::format("expected kmeans or meanshift, got '{}'", v));
                         }
                     },
                     [](const RunConfig& c) {
                         return std::string(c.cluster.method == ClusterMethod::kmeans ? "kmeans" : "meanshift");
                     }});
        f.push_back(number<int>("cluster.k", [](RunConfig& c) -> auto& { return c.cluster.k; }));
        f.push_back(number<int>("cluster.restarts", [](RunConfig& c) -> auto& { return c.cluster.restarts; }));
        f.push_back(number<int>("cluster.max_iter", [](RunConfig& c) -> auto& { return c.cluster.max_iter; }));
        f.push_back(number<double>("cluster.tol", [](RunConfig& c) -> auto& { return c.cluster.tol; }));
        f.push_back(number<double>("cluster.bandwidth_quantile",
                                   [](RunConfig& c) -> auto& { return c.cluster.bandwidth_quantile; }));

        f.push_back({"split.train_labels",
                     [](RunConfig& c, std::string_view, std::string_view v) { c.split.train_labels = parse_list(v); },
                     [](const RunConfig& c) { return join(c.split.train_labels); }});
        f.push_back({"split.novel_labels",
                     [](RunConfig& c, std::string_view, std::string_view v) { c.split.novel_labels = parse_list(v); },
                     [](const RunConfig& c) { return join(c.split.novel_labels); }});
        f.push_back(number<int>("split.random_novel", [](RunConfig& c) -> auto& { return c.split.random_novel; }));
        return f;
    }();
    return table;
}

} // namespace

RunConfig::RunConfig() {
    train.sampler.num_classes_per_batch = 24;
    train.sampler.instances_per_class = 10;
    train.vat = VatConfig{};
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
    key = trim(key);
    value = trim(value);
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError(std::string(key), "unknown key");
    it->set(cfg, key, value);
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string, std::less<>> seen;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view v = line;
        if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
        v = trim(v);
        if (v.empty()) continue;
        const auto eq = v.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(std::string(v), fmt::format("line {}: expected 'key = value'", line_no));
        }
        const auto key = trim(v.substr(0, eq));
        if (!seen.emplace(key).second) throw ConfigError(std::string(key), "duplicate key");
        apply_setting(base, key, v.substr(eq + 1));
    }
    return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ValidationError(fmt::format("cannot open config '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), std::move(base));
}

void validate_run_config(const RunConfig& cfg, bool needs_novel) {
    if (cfg.corpus.empty()) throw ConfigError("corpus", "missing corpus path");
    if (cfg.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
    if (cfg.checkpoint.has_value() != cfg.vocab.has_value()) {
        throw ConfigError(cfg.checkpoint ? "vocab" : "checkpoint", "checkpoint and vocab must be given together");
    }
    if (cfg.min_freq < 1) throw ConfigError("min_freq", "must be >= 1");

    EncoderConfig enc = cfg.encoder;
    enc.vocab_size = std::max<std::size_t>(enc.vocab_size, 1);
    enc.validate();
    cfg.train.validate();

    if (cfg.cluster.k < 1) throw ConfigError("cluster.k", "must be >= 1");
    if (cfg.cluster.restarts < 1) throw ConfigError("cluster.restarts", "must be >= 1");
    if (cfg.cluster.max_iter < 1) throw ConfigError("cluster.max_iter", "must be >= 1");
    if (!(cfg.cluster.tol > 0.0)) throw ConfigError("cluster.tol", "must be > 0");
    if (!(cfg.cluster.bandwidth_quantile > 0.0 && cfg.cluster.bandwidth_quantile <= 1.0)) {
        throw ConfigError("cluster.bandwidth_quantile", "must be in (0, 1]");
    }

    const std::set<std::string> train(cfg.split.train_labels.begin(), cfg.split.train_labels.end());
    for (const auto& l : cfg.split.novel_labels) {
        if (train.contains(l)) {
            throw ConfigError("split.novel_labels", fmt::format("label '{}' is also a training label", l));
        }
    }
    if (cfg.split.random_novel < 0) throw ConfigError("split.random_novel", "must be >= 0");
    if (cfg.split.random_novel > 0 && (!cfg.split.train_labels.empty() || !cfg.split.novel_labels.empty())) {
        throw ConfigError("split.random_novel", "cannot be combined with explicit label lists");
    }
    if (needs_novel) {
        const auto novel = cfg.split.random_novel > 0 ? static_cast<std::size_t>(cfg.split.random_novel)
                                                      : cfg.split.novel_labels.size();
        if (novel < 2) {
            throw ConfigError("split.novel_labels", "the novel split needs at least two classes");
        }
    }
}

std::string render_run_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += fmt::format("{} = {}\n", f.key, f.get(cfg));
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.key);
    return out;
}

} // namespace more
