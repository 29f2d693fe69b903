// Acceptance suite: one PASS/FAIL line per criterion. Run with criterion
// numbers as arguments to select a subset; the exit status is non-zero when
// any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <sys/wait.h>

#include "oracles.hpp"
#include "rissc/channel.hpp"
#include "rissc/corpus.hpp"
#include "rissc/gradcheck.hpp"
#include "rissc/harness.hpp"
#include "rissc/metrics.hpp"

using namespace rissc;
using channel::cplx;
using harness::Variant;

namespace {

namespace fs = std::filesystem;

struct Check {
    bool pass = false;
    std::string detail;
};

// `extra` carries related checks that are reported on their own lines
struct Outcome {
    bool pass = false;
    std::string detail;
    std::vector<std::pair<std::string, Check>> extra;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1: phase-alignment optimality ---------------------------------------

Outcome alignment_optimality() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1001);
    std::vector<channel::ChannelRealization> chs;
    for (int i = 0; i < 1000; ++i) chs.push_back(channel::sample_channels(10, rng));

    double closed_form_err = 0.0;
    for (const auto& ch : chs) {
        const double got = std::abs(channel::effective_gain(ch, channel::align_phases(ch)));
        double expect = std::abs(ch.h1);
        for (std::size_t n = 0; n < 10; ++n) expect += std::abs(ch.h2[n]) * std::abs(ch.h3[n]) / 10.0;
        closed_form_err = std::max(closed_form_err, std::abs(got - expect));
    }

    const std::span<const channel::ChannelRealization> sub(chs.data(), 100);
    const auto bench = channel::phase_bench(sub, 100000, 1002);

    // N = 2: exhaustive grid over both phases, step 1e-3
    double grid_excess = -1e300;
    for (int trial = 0; trial < 3; ++trial) {
        const auto ch = channel::sample_channels(2, rng);
        const double aligned = std::abs(channel::effective_gain(ch, channel::align_phases(ch)));
        const cplx c0 = 0.5 * ch.h2[0] * ch.h3[0], c1 = 0.5 * ch.h2[1] * ch.h3[1];
        const auto steps = static_cast<std::size_t>(channel::kTwoPi / 1e-3) + 1;
        std::vector<cplx> rot(steps);
        for (std::size_t k = 0; k < steps; ++k) rot[k] = std::polar(1.0, static_cast<double>(k) * 1e-3);
        double best = 0.0;
        for (std::size_t i = 0; i < steps; ++i) {
            const cplx partial = ch.h1 + rot[i] * c0;
            for (std::size_t j = 0; j < steps; ++j) best = std::max(best, std::norm(partial + rot[j] * c1));
        }
        grid_excess = std::max(grid_excess, std::sqrt(best) - aligned);
    }
    const double secs = seconds_since(t0);
    return {closed_form_err <= 1e-9 && bench.beat_count == 0 && grid_excess <= 1e-4 && secs < 60.0,
            fmt("closed-form max err %.2e (<= 1e-9), random beats %zu of %zu (== 0), N=2 grid excess %.2e (<= 1e-4), %.1f s (< 60)",
                closed_form_err, bench.beat_count, std::size_t{100} * 100000, grid_excess, secs)};
}

// ---- 2: RIS never hurts ----------------------------------------------------

Outcome ris_never_hurts() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2001);
    std::size_t violations = 0;
    double min_margin = 1e300;
    for (int i = 0; i < 100000; ++i) {
        const auto ch = channel::sample_channels(10, rng);
        const double a = std::abs(channel::effective_gain(ch, channel::align_phases(ch)));
        const double d = std::abs(ch.h1);
        if (!(a >= d)) ++violations;
        min_margin = std::min(min_margin, a - d);
    }
    return {violations == 0, fmt("%zu violations in 100000 realizations, min |delta|-|h1| = %.3e, %.1f s", violations,
                                 min_margin, seconds_since(t0))};
}

// ---- 3: gradient correctness on the desk-scale model -----------------------

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    harness::ExperimentConfig cfg;  // desk-scale shapes
    cfg.data.val_sentences = 10;
    const auto sentences = corpus::synthetic_sentences(2000, 3001);
    const auto data = harness::prepare_data(sentences, std::span<const std::string>(sentences.data(), 10), cfg);
    auto shape = cfg.shape;
    shape.vocab = data.vocab.size();
    model::Transceiver m(shape, 3002);

    const auto batch = text::make_ordered_batches(data.train, 2).front();
    const auto ch = harness::draw_batch_channel(Variant::Ris, batch.rows, cfg.ris_elements, 7.0, 0.0, 3003);

    ad::GradCheckOptions opts;
    opts.samples_per_tensor = 6;
    opts.seed = 3004;
    opts.resolution = 1e-4;
    const auto params = m.params().all();
    const auto rep = ad::finite_diff_check([&] { return harness::batch_loss(m, batch, Variant::Ris, ch); }, params, opts);

    // probes below the resolution are judged on absolute error instead
    double max_abs_unresolved = 0.0;
    std::set<std::string> covered;
    for (const auto& e : rep.entries) {
        covered.insert(e.name);
        if (!e.resolved) max_abs_unresolved = std::max(max_abs_unresolved, std::abs(e.analytic - e.numeric));
    }
    const double secs = seconds_since(t0);
    const bool all_covered = covered.size() == params.size();
    std::string worst = rep.worst() ? rep.worst()->name : "none";
    return {rep.max_rel_error <= 1e-4 && max_abs_unresolved <= 1e-7 && all_covered && secs < 600.0,
            fmt("%zu tensors, %zu probes, max rel err %.2e (<= 1e-4, worst %s), %zu probes under 1e-4 with max abs err "
                "%.2e (<= 1e-7), %.1f s (< 600)",
                params.size(), rep.entries.size(), rep.max_rel_error, worst.c_str(), rep.unresolved,
                max_abs_unresolved, secs)};
}

// ---- 4: metric fidelity ---------------------------------------------------

Outcome metric_fidelity() {
    std::mt19937_64 rng(4001);
    std::uniform_int_distribution<text::TokenId> tok(4, 12);
    std::uniform_int_distribution<std::size_t> len(1, 14);
    double bleu_err = 0.0;
    std::vector<std::vector<text::TokenId>> refs, cands;
    const std::vector<std::vector<double>> weightings{{1.0}, {0.0, 1.0}, {0.5, 0.5}};
    for (int i = 0; i < 200; ++i) {
        std::vector<text::TokenId> r(len(rng)), c(len(rng));
        for (auto& x : r) x = tok(rng);
        for (auto& x : c) x = tok(rng);
        if (i == 0) r = c = {20, 21, 22, 23};  // "I have an apple"
        for (const auto& w : weightings)
            bleu_err = std::max(bleu_err, std::abs(metrics::bleu<text::TokenId>(r, c, metrics::BleuConfig{w}) -
                                                   oracle::bleu({r}, {c}, w)));
        refs.push_back(r);
        cands.push_back(c);
    }
    for (const auto& w : weightings)
        bleu_err = std::max(bleu_err, std::abs(metrics::corpus_bleu<text::TokenId>(refs, cands, metrics::BleuConfig{w}) -
                                               oracle::bleu(refs, cands, w)));

    // the n-gram example: 4 one-grams and 3 two-grams, each once
    const std::vector<std::string> apple{"I", "have", "an", "apple"};
    const auto g1 = metrics::ngram_counts<std::string>(apple, 1), g2 = metrics::ngram_counts<std::string>(apple, 2);
    const bool example_ok = g1.size() == 4 && g2.size() == 3 && g2.count({"have", "an"}) == 1 &&
                            metrics::bleu<std::string>(apple, apple, metrics::BleuConfig::individual(2)) == 1.0;

    double ce_err = 0.0;
    std::normal_distribution<double> nd(0.0, 2.0);
    for (int t = 0; t < 20; ++t) {
        const std::size_t b = 3, l = 6, v = 11;
        std::vector<double> z(b * l * v);
        for (auto& x : z) x = nd(rng);
        std::vector<text::TokenId> targets(b * l);
        std::uniform_int_distribution<text::TokenId> target(0, static_cast<text::TokenId>(v - 1));
        for (auto& x : targets) x = target(rng);
        const auto loss = metrics::cross_entropy_loss(ad::Tensor::from_data({b, l, v}, z), targets).item();
        ce_err = std::max(ce_err, std::abs(loss - oracle::cross_entropy(z, targets, b, l, v)));
    }
    return {bleu_err <= 1e-12 && ce_err <= 1e-12 && example_ok,
            fmt("BLEU max |lib - oracle| %.2e over 200 pairs (<= 1e-12), n-gram example %s, loss max |lib - oracle| %.2e (<= 1e-12)",
                bleu_err, example_ok ? "ok" : "WRONG", ce_err)};
}

// ---- 5: CSI error statistics ---------------------------------------------

Outcome csi_statistics() {
    std::string detail;
    bool pass = true;
    for (double eps : {0.1, 0.2, 0.4}) {
        std::mt19937_64 rng(5000 + static_cast<std::uint64_t>(eps * 10));
        const std::size_t draws = 100000;
        std::vector<cplx> e(draws);
        for (auto& x : e) {
            const auto ch = channel::sample_channels(1, rng);
            const auto est = channel::perturb_csi(ch, eps, rng);
            x = est.h1 / ch.h1 - 1.0;
        }
        cplx mean = 0.0;
        for (auto x : e) mean += x;
        mean /= static_cast<double>(draws);
        double var = 0.0;
        for (auto x : e) var += std::norm(x - mean);
        var /= static_cast<double>(draws - 1);
        const double rel = std::abs(var / (eps * eps) - 1.0);
        pass = pass && rel <= 0.05 && std::abs(mean) <= 0.01;
        detail += fmt("eps %.1f: var/eps^2-1 = %+.4f (|.| <= 0.05), |mean| = %.4f (<= 0.01); ", eps, var / (eps * eps) - 1.0,
                      std::abs(mean));
    }
    return {pass, detail};
}

// ---- 6, 7: desk-scale variant comparison ----------------------------------

harness::ExperimentConfig desk_config() {
    harness::ExperimentConfig c;
    c.shape.max_len = 16;
    c.shape.embed = 32;
    c.shape.feature = 32;
    c.shape.symbols_per_token = 4;
    c.shape.layers = 2;
    c.shape.heads = 4;
    c.shape.ffn = 64;
    c.ris_elements = 10;
    c.train_snr_db = 7.0;
    c.optimizer.kind = "adam";
    c.optimizer.learning_rate = 0.002;
    c.epochs = 15;
    c.batch_size = 64;
    c.eval_batch_size = 128;
    c.eval_snrs = {0, 3, 6, 9};
    c.epsilons = {0.0};
    c.seeds = {1, 2, 3};
    c.master_seed = 6000;
    c.data.val_sentences = 500;
    return c;
}

struct DeskRuns {
    bool done = false;
    std::vector<harness::RunRow> rows;
    double train_seconds = 0.0;
    std::map<Variant, double> seconds_per_variant;
};

DeskRuns& desk_runs() {
    static DeskRuns runs;
    if (runs.done) return runs;
    const auto cfg = desk_config();
    const auto train = corpus::synthetic_sentences(10500, 6001);
    const auto test = corpus::synthetic_sentences(1000, 6002);
    const auto data = harness::prepare_data(train, test, cfg);
    std::printf("  desk-scale corpus: %zu train, %zu validation, %zu test sentences, vocabulary %zu\n", data.train.size(),
                data.val.size(), data.test.size(), data.vocab.size());
    std::fflush(stdout);
    for (auto v : cfg.variants)
        for (auto seed : cfg.seeds) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto res = harness::train(cfg, data, v, seed);
            const double secs = seconds_since(t0);
            runs.seconds_per_variant[v] += secs;
            runs.train_seconds += secs;
            std::printf("  trained %s seed %llu: final %s, best epoch %zu, %.0f s\n",
                        std::string(harness::variant_name(v)).c_str(), static_cast<unsigned long long>(seed),
                        harness::format_log_line(res.log.back()).c_str(), res.best_epoch, secs);
            std::fflush(stdout);
            for (double snr : cfg.eval_snrs)
                runs.rows.push_back(harness::evaluate(res.model, data.test, v, snr, 0.0, seed, cfg).row);
            if (v != Variant::UpperBound)
                for (double eps : {0.1, 0.2, 0.4})
                    runs.rows.push_back(harness::evaluate(res.model, data.test, v, 6.0, eps, seed, cfg).row);
        }
    harness::write_results("acceptance_desk_results.csv", runs.rows, true);
    runs.done = true;
    return runs;
}

double mean_bleu1(const std::vector<harness::RunRow>& rows, Variant v, double snr, double eps) {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows)
        if (r.variant == v && r.snr_db == snr && r.epsilon == eps) {
            s += r.bleu1;
            ++n;
        }
    return n ? s / n : std::nan("");
}

Outcome variant_ordering() {
    auto& runs = desk_runs();
    bool pass = true;
    std::string detail;
    for (double snr : {0.0, 3.0, 6.0, 9.0}) {
        const double ub = mean_bleu1(runs.rows, Variant::UpperBound, snr, 0.0);
        const double ris = mean_bleu1(runs.rows, Variant::Ris, snr, 0.0);
        const double p2p = mean_bleu1(runs.rows, Variant::PointToPoint, snr, 0.0);
        const bool ok = ub >= ris && ris >= p2p && (snr > 6.0 || ris - p2p >= 0.01);
        pass = pass && ok;
        detail += fmt("%g dB: UB %.4f RIS %.4f P2P %.4f (margin %.4f)%s; ", snr, ub, ris, p2p, ris - p2p, ok ? "" : " FAIL");
    }
    double worst = 0.0;
    for (const auto& [v, s] : runs.seconds_per_variant) worst = std::max(worst, s);
    pass = pass && worst <= 7200.0;
    detail += fmt("slowest variant %.0f s for 3 seeds (<= 7200)", worst);

    // mean curves non-decreasing in SNR, one adjacent violation of at most 0.02 allowed
    Check mono{true, ""};
    for (auto v : {Variant::Ris, Variant::PointToPoint}) {
        int violations = 0;
        double worst_drop = 0.0;
        const std::vector<double> snrs{0.0, 3.0, 6.0, 9.0};
        for (std::size_t i = 0; i + 1 < snrs.size(); ++i) {
            const double drop = mean_bleu1(runs.rows, v, snrs[i], 0.0) - mean_bleu1(runs.rows, v, snrs[i + 1], 0.0);
            if (drop > 0.0) {
                ++violations;
                worst_drop = std::max(worst_drop, drop);
            }
        }
        mono.pass = mono.pass && (violations == 0 || (violations == 1 && worst_drop <= 0.02));
        mono.detail += fmt("%s: %d decreases, largest %.4f; ", std::string(harness::variant_name(v)).c_str(), violations,
                           worst_drop);
    }
    return {pass, detail, {{"BLEU-1 non-decreasing in SNR", mono}}};
}

Outcome csi_robustness() {
    auto& runs = desk_runs();
    bool pass = true;
    std::string detail;
    const double ris0 = mean_bleu1(runs.rows, Variant::Ris, 6.0, 0.0);
    const double p2p0 = mean_bleu1(runs.rows, Variant::PointToPoint, 6.0, 0.0);
    for (double eps : {0.1, 0.2, 0.4}) {
        const double dr = ris0 - mean_bleu1(runs.rows, Variant::Ris, 6.0, eps);
        const double dp = p2p0 - mean_bleu1(runs.rows, Variant::PointToPoint, 6.0, eps);
        pass = pass && dr < dp;
        detail += fmt("eps %.1f: RIS drop %.4f, P2P drop %.4f%s; ", eps, dr, dp, dr < dp ? "" : " FAIL");
    }
    return {pass, detail};
}

// ---- 8: overfit sanity ------------------------------------------------------

Outcome overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = desk_config();
    cfg.train_snr_db = 30.0;
    cfg.epochs = 500;
    cfg.batch_size = 50;
    cfg.data.val_sentences = 0;
    const auto sentences = corpus::synthetic_sentences(50, 8001);
    const auto data = harness::prepare_data(sentences, sentences, cfg);
    const auto res = harness::train(cfg, data, Variant::Ris, 1);
    const auto ev = harness::evaluate(res.model, data.train, Variant::Ris, 30.0, 0.0, 1, cfg);
    const double final_loss = res.log.back().mean_loss;
    return {ev.row.bleu1 > 0.99 && data.train.size() == 50,
            fmt("%zu sentences, 500 epochs at 30 dB: training BLEU-1 %.4f (> 0.99), %.0f s", data.train.size(),
                ev.row.bleu1, seconds_since(t0)),
            {{"overfit final training loss", {final_loss < 0.1, fmt("final mean loss %.4f (< 0.1)", final_loss)}}}};
}

// ---- 9: determinism through the command line --------------------------------

int run_cli(const std::string& args) {
    const int status = std::system((std::string(RISSC_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

Outcome determinism() {
    const auto root = fs::temp_directory_path() / "rissc_acceptance_determinism";
    fs::remove_all(root);
    std::map<std::string, std::string> first;
    bool ok = true;
    std::size_t compared = 0;
    for (int rep = 0; rep < 2; ++rep) {
        const auto dir = root / ("run" + std::to_string(rep));
        fs::create_directories(dir);
        {
            std::ofstream t(dir / "train.txt"), s(dir / "test.txt");
            for (const auto& x : corpus::synthetic_sentences(300, 9001)) t << x << '\n';
            for (const auto& x : corpus::synthetic_sentences(60, 9002)) s << x << '\n';
            std::ofstream c(dir / "exp.ini");
            c << "[data]\ntrain_corpus = train.txt\ntest_corpus = test.txt\nval_sentences = 30\n"
                 "[model]\nmax_len = 16\nembed = 16\nfeature = 16\nsymbols_per_token = 2\nlayers = 1\nheads = 2\nffn = 32\n"
                 "[train]\noptimizer = adam\nlearning_rate = 0.003\nepochs = 3\nbatch_size = 32\n"
                 "[eval]\nsnr_db = 0, 9\nepsilon = 0, 0.2\nseeds = 1, 2\n"
                 "[run]\nmaster_seed = 9003\noutput_dir = out\n";
        }
        const auto cfg = "--config " + (dir / "exp.ini").string();
        ok = ok && run_cli("train " + cfg) == 0 && run_cli("sweep " + cfg) == 0;
        for (const auto& e : fs::directory_iterator(dir / "out")) {
            const auto name = e.path().filename().string();
            if (e.path().extension() != ".ckpt" && e.path().extension() != ".csv") continue;
            if (rep == 0) {
                first[name] = slurp(e.path());
            } else {
                ++compared;
                ok = ok && first.count(name) && first[name] == slurp(e.path());
            }
        }
    }
    fs::remove_all(root);
    return {ok && compared == 7 && first.size() == 7,
            fmt("%zu files (6 checkpoints + results CSV) compared across two full runs: %s", compared,
                ok ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"phase-alignment optimality", alignment_optimality},
        {"RIS never hurts", ris_never_hurts},
        {"gradient correctness", gradient_correctness},
        {"metric fidelity", metric_fidelity},
        {"CSI model statistics", csi_statistics},
        {"variant ordering vs SNR", variant_ordering},
        {"CSI robustness ordering", csi_robustness},
        {"overfit sanity", overfit},
        {"determinism", determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("criterion %d %s: %s -- %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), o.detail.c_str());
        for (const auto& [name, c] : o.extra) {
            failed += c.pass ? 0 : 1;
            std::printf("  related check %s: %s -- %s\n", c.pass ? "PASS" : "FAIL", name.c_str(), c.detail.c_str());
        }
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
