#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "more/config.hpp"
#include "more/error.hpp"

using namespace more;

namespace {

std::string key_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<no error>";
}

} // namespace

TEST_CASE("defaults") {
    const RunConfig c;
    CHECK(c.train.loss.alpha_p == 0.8);
    CHECK(c.train.loss.alpha_n == 1.2);
    CHECK(c.train.loss.lambda == 0.5);
    CHECK(c.train.loss.temperature == 10.0);
    CHECK(c.train.sampler.num_classes_per_batch == 24);
    CHECK(c.train.sampler.instances_per_class == 10);
    CHECK(c.train.learning_rate == 0.003);
    REQUIRE(c.train.vat.has_value());
    CHECK(c.train.vat->epsilon == 0.02);
    CHECK(c.train.vat->beta == 1.0);
    CHECK(c.vat_enabled);
    CHECK(c.cluster.method == ClusterMethod::kmeans);
    CHECK(c.cluster.bandwidth_quantile == 0.3);
    CHECK(c.seed == 42);
}

TEST_CASE("parse and render") {
    const RunConfig c = parse_run_config(R"(
# comment line
corpus = data/train.jsonl
loss.alpha_p = 0.7   # trailing comment
cluster.method = meanshift
vat.enabled = false
split.novel_labels = a, b ,c
)");
    CHECK(c.corpus == "data/train.jsonl");
    CHECK(c.train.loss.alpha_p == 0.7);
    CHECK(c.cluster.method == ClusterMethod::meanshift);
    CHECK_FALSE(c.vat_enabled);
    CHECK(c.split.novel_labels == std::vector<std::string>{"a", "b", "c"});

    const std::string text = render_run_config(c);
    CHECK(render_run_config(parse_run_config(text)) == text);

    // every key appears in the rendering
    for (const auto& k : config_keys()) {
        const bool present = ("\n" + text).find("\n" + k + " = ") != std::string::npos;
        CHECK(present);
    }
}

TEST_CASE("round trip preserves doubles exactly") {
    RunConfig c;
    c.train.learning_rate = 0.1 + 0.2;
    c.cluster.tol = 1.0 / 3.0;
    const RunConfig r = parse_run_config(render_run_config(c));
    CHECK(r.train.learning_rate == c.train.learning_rate);
    CHECK(r.cluster.tol == c.cluster.tol);
}

TEST_CASE("errors name the offending key") {
    CHECK(key_of([] { (void)parse_run_config("nonsense.key = 1"); }) == "nonsense.key");
    CHECK(key_of([] { (void)parse_run_config("loss.alpha_p = 0.3\nloss.alpha_p = 0.4"); }) == "loss.alpha_p");
    CHECK(key_of([] { (void)parse_run_config("cluster.k = many"); }) == "cluster.k");
    CHECK(key_of([] { (void)parse_run_config("vat.enabled = maybe"); }) == "vat.enabled");
    CHECK(key_of([] { (void)parse_run_config("cluster.method = dbscan"); }) == "cluster.method");
    CHECK(key_of([] { validate_run_config(RunConfig{}, false); }) == "corpus");

    RunConfig c;
    c.corpus = "x.jsonl";
    CHECK_NOTHROW(validate_run_config(c, false));
    CHECK(key_of([&] { validate_run_config(c, true); }) == "split.novel_labels");

    c.split.train_labels = {"a", "b"};
    c.split.novel_labels = {"b", "c"};
    CHECK(key_of([&] { validate_run_config(c, true); }) == "split.novel_labels");
    c.split.novel_labels = {"c", "d"};
    CHECK_NOTHROW(validate_run_config(c, true));

    c.train.loss.alpha_n = 0.5;
    CHECK(key_of([&] { validate_run_config(c, true); }).rfind("loss.", 0) == 0);
    c = RunConfig{};
    c.corpus = "x";
    c.checkpoint = "ck.bin";
    CHECK(key_of([&] { validate_run_config(c, false); }) == "vocab");
    c = RunConfig{};
    c.corpus = "x";
    c.cluster.bandwidth_quantile = 0.0;
    CHECK(key_of([&] { validate_run_config(c, false); }) == "cluster.bandwidth_quantile");
}
