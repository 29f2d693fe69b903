// rissc: train, evaluate and sweep the RIS semantic link; standalone phase
// and BLEU utilities.
//
// Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numerical failure.

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "rissc/channel.hpp"
#include "rissc/config.hpp"
#include "rissc/harness.hpp"
#include "rissc/metrics.hpp"

using namespace rissc;
using harness::ConfigError;
using harness::IoError;
using harness::NumericalError;
using harness::Variant;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

struct Loaded {
    harness::ExperimentConfig cfg;
    harness::PreparedData data;
};

Loaded load_all(const std::string& config_path) {
    Loaded l{config::load(config_path), {}};
    config::check_paths(l.cfg);
    l.data = harness::prepare_data(l.cfg);
    return l;
}

std::vector<Variant> pick_variants(const harness::ExperimentConfig& cfg, const std::string& flag) {
    if (flag.empty()) return cfg.variants;
    return {harness::parse_variant(flag)};
}

void save_atomic(const model::Transceiver& m, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    m.save(tmp);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot write checkpoint " + path.string() + ": " + ec.message());
}

model::Transceiver load_checked(const std::filesystem::path& path, const harness::PreparedData& data,
                                const harness::ExperimentConfig& cfg, Variant v, std::uint64_t seed) {
    if (!std::filesystem::exists(path))
        throw IoError("missing checkpoint for variant " + std::string(harness::variant_name(v)) + " seed " +
                      std::to_string(seed) + ": " + path.string());
    auto m = model::Transceiver::load(path);
    if (m.shape().vocab != data.vocab.size())
        throw ConfigError("checkpoint " + path.string() + " has a vocabulary of " + std::to_string(m.shape().vocab) +
                          " tokens, the corpus gives " + std::to_string(data.vocab.size()));
    if (m.shape().max_len != cfg.shape.max_len)
        throw ConfigError("checkpoint " + path.string() + " has max_len " + std::to_string(m.shape().max_len) +
                          ", config has " + std::to_string(cfg.shape.max_len));
    return m;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& variant,
              const std::string& out) {
    auto [cfg, data] = load_all(config_path);
    const auto variants = pick_variants(cfg, variant);
    const auto seeds = seed ? std::vector<std::uint64_t>{*seed} : cfg.seeds;
    if (!out.empty() && variants.size() * seeds.size() != 1)
        throw ConfigError("--out needs exactly one variant and one seed");
    data.vocab.save(cfg.output_dir / "vocab.txt");
    for (auto v : variants)
        for (auto s : seeds) {
            const auto ckpt = out.empty() ? harness::checkpoint_path(cfg.output_dir, v, s) : std::filesystem::path(out);
            auto log_path = ckpt;
            log_path.replace_extension(".log");
            std::ofstream log(log_path, std::ios::trunc);
            if (!log) throw IoError("cannot write training log " + log_path.string());
            auto res = harness::train(cfg, data, v, s, [&](const harness::EpochLog& e) {
                const auto line = harness::format_log_line(e);
                log << line << '\n' << std::flush;
                std::cout << harness::variant_name(v) << " seed " << s << " " << line << '\n' << std::flush;
            });
            save_atomic(res.model, ckpt);
            std::cout << "wrote " << ckpt.string() << " (best epoch " << res.best_epoch << ")\n";
        }
    return 0;
}

int cmd_eval(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& variant,
             const std::string& checkpoint, const std::vector<double>& snrs, const std::vector<double>& epsilons,
             const std::string& out) {
    auto [cfg, data] = load_all(config_path);
    if (variant.empty()) throw ConfigError("eval needs --variant");
    const auto v = harness::parse_variant(variant);
    const auto s = seed.value_or(cfg.seeds.front());
    const auto path = checkpoint.empty() ? harness::checkpoint_path(cfg.output_dir, v, s) : std::filesystem::path(checkpoint);
    const auto m = load_checked(path, data, cfg, v, s);
    std::vector<harness::RunRow> rows;
    for (double snr : snrs.empty() ? cfg.eval_snrs : snrs)
        for (double eps : epsilons.empty() ? cfg.epsilons : epsilons) {
            if (eps < 0.0) throw ConfigError("epsilon must be non-negative");
            rows.push_back(harness::evaluate(m, data.test, v, snr, eps, s, cfg).row);
        }
    if (!out.empty()) harness::write_results(out, rows, true);
    std::cout << harness::kCsvHeader << '\n';
    for (const auto& r : rows) std::cout << harness::format_row(r) << '\n';
    return 0;
}

void print_summary(std::span<const harness::RunRow> rows) {
    std::printf("%-15s %8s %8s %10s %10s %12s %6s\n", "variant", "snr_db", "epsilon", "bleu1", "bleu2", "mean_loss",
                "seeds");
    for (const auto& s : harness::summarize(rows))
        std::printf("%-15s %8.3g %8.3g %10.6f %10.6f %12.6f %6zu\n", std::string(harness::variant_name(s.variant)).c_str(),
                    s.snr_db, s.epsilon, s.bleu1, s.bleu2, s.mean_loss, s.seeds);
}

int cmd_sweep(const std::string& config_path, const std::string& out) {
    auto [cfg, data] = load_all(config_path);
    std::map<std::pair<Variant, std::uint64_t>, model::Transceiver> models;
    for (auto v : cfg.variants)
        for (auto s : cfg.seeds)
            models.emplace(std::pair{v, s}, load_checked(harness::checkpoint_path(cfg.output_dir, v, s), data, cfg, v, s));
    const std::filesystem::path csv = out.empty() ? cfg.output_dir / "results.csv" : std::filesystem::path(out);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const auto rows = harness::sweep(
        cfg, data, [&](Variant v, std::uint64_t s) -> const model::Transceiver& { return models.at({v, s}); }, csv,
        &g_interrupted);
    print_summary(rows);
    if (g_interrupted.load()) throw IoError("interrupted; partial results in " + csv.string());
    std::cout << "wrote " << csv.string() << " (" << rows.size() << " rows)\n";
    return 0;
}

int cmd_phase_bench(std::size_t n, std::size_t trials, std::size_t random_configs, std::uint64_t seed) {
    if (n == 0 || trials == 0) throw ConfigError("--n and --trials must be at least 1");
    const auto r = channel::phase_bench(n, trials, random_configs, seed);
    std::printf("elements=%zu\ntrials=%zu\nrandom_configs=%zu\n", r.elements, r.trials, r.random_configs);
    std::printf("mean_aligned_gain=%.12g\nmean_direct_gain=%.12g\nmean_gain_ratio=%.12g\n", r.mean_aligned,
                r.mean_direct, r.mean_gain_ratio);
    std::printf("max_closed_form_error=%.3g\nbeat_count=%zu\n", r.max_closed_form_error, r.beat_count);
    if (r.beat_count != 0) throw NumericalError("random phases beat alignment " + std::to_string(r.beat_count) + " times");
    return 0;
}

std::vector<std::vector<std::string>> read_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path);
    std::vector<std::vector<std::string>> out;
    for (std::string line; std::getline(is, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(text::tokenize(line));
    }
    return out;
}

int cmd_bleu(const std::string& ref_path, const std::string& cand_path, std::size_t order, bool cumulative) {
    if (order == 0) throw ConfigError("--order must be at least 1");
    const auto refs = read_lines(ref_path), cands = read_lines(cand_path);
    if (refs.size() != cands.size())
        throw IoError("line counts differ: " + std::to_string(refs.size()) + " references, " +
                      std::to_string(cands.size()) + " candidates");
    if (refs.empty()) throw IoError("no sentences in " + ref_path);
    metrics::BleuConfig cfg = cumulative ? metrics::BleuConfig{std::vector<double>(order, 1.0 / static_cast<double>(order))}
                                         : metrics::BleuConfig::individual(order);
    long double sum = 0.0L;
    for (std::size_t i = 0; i < refs.size(); ++i) sum += metrics::bleu<std::string>(refs[i], cands[i], cfg);
    std::printf("sentences=%zu\ncorpus_bleu=%.12g\nmean_sentence_bleu=%.12g\n", refs.size(),
                metrics::corpus_bleu<std::string>(refs, cands, cfg),
                static_cast<double>(sum / static_cast<long double>(refs.size())));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rissc experiment driver"};
    app.require_subcommand(1);

    std::string config_path, out, variant, checkpoint, ref, cand;
    std::optional<std::uint64_t> seed;
    std::vector<double> snrs, epsilons;
    std::size_t n = 10, trials = 1000, random_configs = 1000, order = 1;
    std::uint64_t bench_seed = 0;
    bool cumulative = false;

    auto* train = app.add_subcommand("train", "train one checkpoint per (variant, seed)");
    train->add_option("--config", config_path, "experiment config (INI)")->required();
    train->add_option("--seed", seed, "replicate seed (default: every seed in the config)");
    train->add_option("--variant", variant, "RIS, POINT_TO_POINT or UPPER_BOUND (default: all configured)");
    train->add_option("--out", out, "checkpoint path (single run only)");

    auto* eval = app.add_subcommand("eval", "evaluate one checkpoint");
    eval->add_option("--config", config_path, "experiment config (INI)")->required();
    eval->add_option("--seed", seed, "replicate seed (default: first configured)");
    eval->add_option("--variant", variant, "system variant")->required();
    eval->add_option("--checkpoint", checkpoint, "checkpoint (default: output_dir/<VARIANT>_seed<N>.ckpt)");
    eval->add_option("--snr", snrs, "test SNRs in dB (default: config list)");
    eval->add_option("--epsilon", epsilons, "CSI error levels (default: config list)");
    eval->add_option("--out", out, "result CSV");

    auto* sweep = app.add_subcommand("sweep", "evaluate every configured cell into one CSV");
    sweep->add_option("--config", config_path, "experiment config (INI)")->required();
    sweep->add_option("--out", out, "result CSV (default: output_dir/results.csv)");

    auto* bench = app.add_subcommand("phase-bench", "phase alignment against random phases");
    bench->add_option("--n", n, "RIS elements");
    bench->add_option("--trials", trials, "channel realizations");
    bench->add_option("--random", random_configs, "random phase configurations per realization");
    bench->add_option("--seed", bench_seed, "seed");

    auto* bleu = app.add_subcommand("bleu", "BLEU between two line-aligned files");
    bleu->add_option("--ref", ref, "reference file")->required();
    bleu->add_option("--cand", cand, "candidate file")->required();
    bleu->add_option("--order", order, "n-gram order");
    bleu->add_flag("--cumulative", cumulative, "uniform weights over orders 1..order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "rissc: error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*train) return cmd_train(config_path, seed, variant, out);
        if (*eval) return cmd_eval(config_path, seed, variant, checkpoint, snrs, epsilons, out);
        if (*sweep) return cmd_sweep(config_path, out);
        if (*bench) return cmd_phase_bench(n, trials, random_configs, bench_seed);
        if (*bleu) return cmd_bleu(ref, cand, order, cumulative);
    } catch (const ConfigError& e) {
        std::cerr << "rissc: config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "rissc: config error: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "rissc: i/o error: " << e.what() << '\n';
        return 3;
    } catch (const model::CheckpointError& e) {
        std::cerr << "rissc: i/o error: " << e.what() << '\n';
        return 3;
    } catch (const text::IngestionError& e) {
        std::cerr << "rissc: i/o error: " << e.what() << '\n';
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "rissc: numerical failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "rissc: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
