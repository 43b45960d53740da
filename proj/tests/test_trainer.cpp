#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "more/error.hpp"
#include "more/trainer.hpp"
#include "support.hpp"

#include <fstream>
#include <limits>

using namespace more;
using more::test::tiny_encoder;

namespace {

struct SmallTask {
    Dataset data;
    Vocabulary vocab;
    EncoderConfig enc;
};

SmallTask small_task(int classes = 8, int per_class = 50) {
    SynthConfig sc;
    sc.num_classes = classes;
    sc.per_class = per_class;
    sc.vocab_size = 120;
    Rng rng(1);
    SmallTask t{synth_generate(sc, rng), {}, {}};
    t.vocab = build_vocab(t.data, 1);
    t.enc.vocab_size = t.vocab.size();
    t.enc.word_dim = 16;
    t.enc.num_filters = 32;
    t.enc.hidden_dim = 16;
    t.enc.max_len = 20;
    t.enc.max_offset = 20;
    return t;
}

TrainConfig episode_cfg(long steps) {
    TrainConfig c;
    c.num_steps = steps;
    c.sampler.num_classes_per_batch = 8;
    c.sampler.instances_per_class = 5;
    c.vat.reset();
    return c;
}

} // namespace

TEST_CASE("adam_step") {
    const EncoderConfig cfg = tiny_encoder();
    Rng rng(2);
    const EncoderParams start = init_params(cfg, rng);

    SUBCASE("zero gradients leave parameters unchanged and count the step") {
        EncoderParams p = start;
        AdamState s = AdamState::zeros(cfg);
        adam_step(p, EncoderParams::zeros(cfg), s, 0.003);
        CHECK(p == start);
        CHECK(s.step == 1);
    }
    SUBCASE("first step equals -lr * g / (|g| + eps)") {
        EncoderParams p = start;
        EncoderParams g = EncoderParams::zeros(cfg);
        std::mt19937_64 r(5);
        std::normal_distribution<double> nd;
        g.for_each([&](std::string_view, Tensor& t) {
            for (double& v : t.data) v = nd(r);
        });
        AdamState s = AdamState::zeros(cfg);
        adam_step(p, g, s, 0.003);
        std::vector<const Tensor*> ps, gs, ss;
        p.for_each([&](std::string_view, const Tensor& t) { ps.push_back(&t); });
        g.for_each([&](std::string_view, const Tensor& t) { gs.push_back(&t); });
        start.for_each([&](std::string_view, const Tensor& t) { ss.push_back(&t); });
        for (std::size_t i = 0; i < ps.size(); ++i) {
            for (std::size_t k = 0; k < ps[i]->data.size(); ++k) {
                const double gk = gs[i]->data[k];
                const double expected = ss[i]->data[k] - 0.003 * gk / (std::abs(gk) + 1e-8);
                CHECK(ps[i]->data[k] == doctest::Approx(expected).epsilon(1e-12));
            }
        }
    }
    SUBCASE("second step follows the bias-corrected recurrence") {
        EncoderParams p = EncoderParams::zeros(cfg);
        EncoderParams g1 = EncoderParams::zeros(cfg), g2 = EncoderParams::zeros(cfg);
        g1.proj_bias.data[0] = 1.0;
        g2.proj_bias.data[0] = -3.0;
        AdamState s = AdamState::zeros(cfg);
        adam_step(p, g1, s, 0.1);
        const double after1 = p.proj_bias.data[0];
        adam_step(p, g2, s, 0.1);
        const double m = 0.9 * 0.1 * 1.0 + 0.1 * -3.0;
        const double v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;
        const double mhat = m / (1.0 - 0.81);
        const double vhat = v / (1.0 - 0.999 * 0.999);
        CHECK(p.proj_bias.data[0] == doctest::Approx(after1 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-12));
    }
    SUBCASE("identical gradient streams give identical trajectories") {
        EncoderParams a = start, b = start;
        AdamState sa = AdamState::zeros(cfg), sb = AdamState::zeros(cfg);
        std::mt19937_64 r(1);
        std::normal_distribution<double> nd;
        for (int step = 0; step < 5; ++step) {
            EncoderParams g = EncoderParams::zeros(cfg);
            g.for_each([&](std::string_view, Tensor& t) {
                for (double& v : t.data) v = nd(r);
            });
            adam_step(a, g, sa, 0.01);
            adam_step(b, g, sb, 0.01);
        }
        CHECK(a == b);
    }
    SUBCASE("non-finite gradient raises with the step number and changes nothing") {
        EncoderParams p = start;
        AdamState s = AdamState::zeros(cfg);
        adam_step(p, EncoderParams::zeros(cfg), s, 0.003);
        EncoderParams g = EncoderParams::zeros(cfg);
        g.conv_filters.data[3] = std::numeric_limits<double>::quiet_NaN();
        const EncoderParams before = p;
        try {
            adam_step(p, g, s, 0.003);
            FAIL("expected DivergenceError");
        } catch (const DivergenceError& e) {
            CHECK(e.step() == 2);
            CHECK(std::string(e.what()).find("divergent gradients") != std::string::npos);
        }
        CHECK(p == before);
        CHECK(s.step == 1);
    }
}

TEST_CASE("train config defaults and validation") {
    const TrainConfig c;
    CHECK(c.learning_rate == 0.003);
    CHECK(c.sampler.num_classes_per_batch == 24);
    CHECK(c.sampler.instances_per_class == 10);
    CHECK(c.loss.alpha_p == 0.8);
    CHECK(c.loss.alpha_n == 1.2);
    CHECK(c.loss.lambda == 0.5);
    CHECK(c.loss.temperature == 10.0);
    REQUIRE(c.vat.has_value());
    CHECK(c.vat->epsilon == 0.02);
    CHECK(c.vat->beta == 1.0);

    TrainConfig bad = c;
    bad.num_steps = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("train loop contracts") {
    const SmallTask t = small_task();

    SUBCASE("one step, one record") {
        const auto r = train(t.data, t.vocab, t.enc, episode_cfg(1));
        CHECK(r.history.size() == 1);
        CHECK(r.history[0].step == 1);
    }
    SUBCASE("without VAT the vat column is zero and total equals rll") {
        const auto r = train(t.data, t.vocab, t.enc, episode_cfg(5));
        for (const auto& h : r.history) {
            CHECK(h.vat_loss == 0.0);
            CHECK(h.total_loss == h.rll_loss);
        }
    }
    SUBCASE("beta = 0 follows the same trajectory as VAT absent") {
        TrainConfig with_zero = episode_cfg(6);
        with_zero.vat = VatConfig{};
        with_zero.vat->beta = 0.0;
        const auto a = train(t.data, t.vocab, t.enc, episode_cfg(6));
        const auto b = train(t.data, t.vocab, t.enc, with_zero);
        CHECK(a.params == b.params);
        for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].rll_loss == b.history[i].rll_loss);
    }
    SUBCASE("reproducible, and serial == parallel") {
        TrainConfig c = episode_cfg(4);
        c.vat = VatConfig{};
        const auto a = train(t.data, t.vocab, t.enc, c);
        const auto b = train(t.data, t.vocab, t.enc, c);
        const auto s = train(t.data, t.vocab, t.enc, c, {}, Exec::serial);
        CHECK(a.params == b.params);
        CHECK(a.history == b.history);
        CHECK(a.params == s.params);
        CHECK(a.history == s.history);
        for (const auto& h : a.history) {
            CHECK(std::isfinite(h.total_loss));
            CHECK(h.vat_loss > 0.0);
            CHECK(h.total_loss == doctest::Approx(h.rll_loss + h.vat_loss).epsilon(1e-14));
        }
    }
    SUBCASE("callback sees every step") {
        long seen = 0;
        (void)train(t.data, t.vocab, t.enc, episode_cfg(3), [&](const StepRecord& r) { seen = r.step; });
        CHECK(seen == 3);
    }
    SUBCASE("vocabulary mismatch is rejected") {
        EncoderConfig wrong = t.enc;
        wrong.vocab_size += 1;
        CHECK_THROWS_AS(train(t.data, t.vocab, wrong, episode_cfg(1)), ValidationError);
    }
}

TEST_CASE("rll loss decreases on a small synthetic task") {
    const SmallTask t = small_task(8, 50);
    const auto r = train(t.data, t.vocab, t.enc, episode_cfg(300));
    REQUIRE(r.history.size() == 300);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 10; ++i) {
        first += r.history[static_cast<std::size_t>(i)].rll_loss;
        last += r.history[r.history.size() - 1 - static_cast<std::size_t>(i)].rll_loss;
    }
    CHECK(last < first);
}

TEST_CASE("checkpoints and history files") {
    const SmallTask t = small_task();
    TrainConfig c = episode_cfg(4);
    c.eval_every = 2;
    c.checkpoint_path = more::test::temp_path("train_ck.bin");
    std::filesystem::remove(*c.checkpoint_path);
    const auto r = train(t.data, t.vocab, t.enc, c);
    const Checkpoint ck = load_checkpoint(*c.checkpoint_path);
    CHECK(ck.params == r.params);
    CHECK(ck.config == t.enc);

    const auto csv = more::test::temp_path("history.csv");
    write_history_csv(csv, r.history);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,rll_loss,vat_loss,total_loss");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 4);
}

TEST_CASE("make_rng streams are independent and repeatable") {
    Rng a = make_rng(42, 1), b = make_rng(42, 1), c = make_rng(42, 2);
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
}
