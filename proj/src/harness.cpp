#include "rissc/harness.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "rissc/metrics.hpp"
#include "rissc/seed.hpp"

namespace rissc::harness {

using ad::Tensor;
using text::TokenBatch;

namespace {

enum Tag : std::uint64_t { kInit = 1, kShuffle, kTrainChannel, kValChannel, kEval, kChannel, kCsi, kNoise, kBatch };

std::uint64_t bits(double x) { return std::bit_cast<std::uint64_t>(x); }

}  // namespace

std::string_view variant_name(Variant v) {
    switch (v) {
    case Variant::Ris: return "RIS";
    case Variant::PointToPoint: return "POINT_TO_POINT";
    case Variant::UpperBound: return "UPPER_BOUND";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    for (auto v : {Variant::Ris, Variant::PointToPoint, Variant::UpperBound})
        if (variant_name(v) == name) return v;
    throw ConfigError("unknown variant '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
    try {
        auto s = shape;
        if (s.vocab == 0) s.vocab = text::kNumReserved + 1;  // set from the corpus later
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (variants.empty() || eval_snrs.empty() || epsilons.empty() || seeds.empty())
        throw ConfigError("variant, snr, epsilon and seed lists must be non-empty");
    for (std::size_t i = 0; i < seeds.size(); ++i)
        for (std::size_t j = i + 1; j < seeds.size(); ++j)
            if (seeds[i] == seeds[j]) throw ConfigError("seeds must be distinct");
    for (double e : epsilons)
        if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError("epsilon must be finite and non-negative");
    for (double s : eval_snrs)
        if (!std::isfinite(s)) throw ConfigError("snr values must be finite");
    if (!std::isfinite(train_snr_db)) throw ConfigError("training snr must be finite");
    if (ris_elements == 0) throw ConfigError("ris_elements must be at least 1");
    if (epochs == 0 || batch_size == 0 || eval_batch_size == 0) throw ConfigError("epochs and batch sizes must be positive");
    if (optimizer.kind != "sgd" && optimizer.kind != "adam") throw ConfigError("optimizer must be sgd or adam");
    if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
}

PreparedData prepare_data(std::span<const std::string> train_sentences, std::span<const std::string> test_sentences,
                          const ExperimentConfig& cfg) {
    const auto max_len = cfg.shape.max_len;
    auto train = text::length_filter(train_sentences, max_len);
    auto test = text::length_filter(test_sentences, max_len);
    if (cfg.data.max_train_sentences && train.size() > cfg.data.max_train_sentences + cfg.data.val_sentences)
        train.resize(cfg.data.max_train_sentences + cfg.data.val_sentences);
    if (cfg.data.max_test_sentences && test.size() > cfg.data.max_test_sentences) test.resize(cfg.data.max_test_sentences);
    if (train.size() <= cfg.data.val_sentences)
        throw ConfigError("training corpus has " + std::to_string(train.size()) + " usable sentences, not enough for " +
                          std::to_string(cfg.data.val_sentences) + " validation sentences");
    std::vector<std::string> val(train.end() - static_cast<std::ptrdiff_t>(cfg.data.val_sentences), train.end());
    train.resize(train.size() - cfg.data.val_sentences);

    PreparedData d;
    d.vocab = text::build_vocab(train, cfg.data.min_freq, cfg.data.max_vocab);
    d.train = text::encode_corpus(train, d.vocab, max_len);
    d.val = text::encode_corpus(val, d.vocab, max_len);
    d.test = text::encode_corpus(test, d.vocab, max_len);
    return d;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    std::vector<std::string> train, test;
    try {
        train = text::read_corpus(cfg.data.train_corpus);
        test = text::read_corpus(cfg.data.test_corpus);
    } catch (const text::IngestionError& e) {
        throw IoError(e.what());
    }
    return prepare_data(train, test, cfg);
}

BatchChannel draw_batch_channel(Variant v, std::size_t rows, std::size_t elements, double snr_db, double epsilon,
                                std::uint64_t seed, ChannelOptions opts) {
    BatchChannel out;
    out.sigma2 = channel::snr_to_sigma(snr_db);
    out.noise_seed = derive_seed(seed, {kNoise});
    if (v == Variant::UpperBound) return out;
    std::mt19937_64 truth_rng(derive_seed(seed, {kChannel}));
    std::mt19937_64 csi_rng(derive_seed(seed, {kCsi}));
    out.links.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto truth = channel::sample_channels(elements, truth_rng);
        const auto estimate = channel::perturb_csi(truth, epsilon, csi_rng);
        if (v == Variant::PointToPoint) {
            out.links.push_back(channel::point_to_point_link(truth, estimate));
        } else if (opts.force_ris_off) {
            auto refl = channel::align_phases(estimate);
            std::fill(refl.gamma.begin(), refl.gamma.end(), 0.0);
            out.links.push_back({channel::effective_gain(truth, refl), channel::phase(estimate.h1)});
        } else {
            out.links.push_back(channel::ris_link(truth, estimate));
        }
    }
    return out;
}

Tensor transmit(const model::Transceiver& m, const TokenBatch& batch, Variant v, const BatchChannel& ch) {
    const auto x = m.channel_encode(m.semantic_encode(batch)).symbols;
    if (v == Variant::UpperBound) return m.channel_decode(x);
    if (ch.links.size() != batch.rows) throw std::invalid_argument("transmit: one link per batch row required");
    std::vector<channel::cplx> deltas;
    std::vector<double> theta;
    for (const auto& l : ch.links) {
        deltas.push_back(l.delta);
        theta.push_back(l.derotation);
    }
    const auto y = channel::apply_channel(x, deltas, channel::NoiseModel{ch.sigma2}, ch.noise_seed);
    return m.channel_decode(channel::derotate(y, theta));
}

Tensor batch_loss(const model::Transceiver& m, const TokenBatch& batch, Variant v, const BatchChannel& ch) {
    const auto v_hat = transmit(m, batch, v, ch);
    return metrics::cross_entropy_loss(m.semantic_decode(v_hat, model::decoder_inputs(batch)),
                                       model::decoder_targets(batch));
}

std::uint64_t run_seed(std::uint64_t master_seed, std::uint64_t seed) { return derive_seed(master_seed, {seed}); }

namespace {

// Teacher-forced loss per sentence over a corpus under fixed channel draws.
double corpus_loss(const model::Transceiver& m, const text::EncodedCorpus& corpus, Variant v, double snr_db,
                   double epsilon, std::uint64_t seed, std::size_t elements, std::size_t batch_size,
                   ChannelOptions opts = {}) {
    if (corpus.empty()) return 0.0;
    ad::NoGradGuard no_grad;
    long double total = 0.0L;
    const auto batches = text::make_ordered_batches(corpus, batch_size);
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const auto& b = batches[i];
        const auto ch = draw_batch_channel(v, b.rows, elements, snr_db, epsilon, derive_seed(seed, {kBatch, i}), opts);
        total += static_cast<long double>(batch_loss(m, b, v, ch).item()) * static_cast<long double>(b.rows);
    }
    return static_cast<double>(total / static_cast<long double>(corpus.size()));
}

std::vector<std::vector<double>> snapshot(const model::Transceiver& m) {
    std::vector<std::vector<double>> out;
    for (const auto& [_, t] : m.params().all()) out.emplace_back(t.data().begin(), t.data().end());
    return out;
}

void restore(model::Transceiver& m, const std::vector<std::vector<double>>& values) {
    auto all = m.params().all();
    for (std::size_t i = 0; i < all.size(); ++i) {
        auto d = all[i].second.mutable_data();
        std::copy(values[i].begin(), values[i].end(), d.begin());
    }
}

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, const PreparedData& data, Variant v, std::uint64_t seed,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    if (data.train.empty()) throw ConfigError("empty training corpus");
    auto shape = cfg.shape;
    shape.vocab = data.vocab.size();
    const auto rs = run_seed(cfg.master_seed, seed);
    TrainResult res{model::Transceiver(shape, derive_seed(rs, {kInit})), {}, 0};
    auto& m = res.model;
    optim::Optimizer opt(m.params().all(), cfg.optimizer);

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto batches = text::make_batches(data.train, cfg.batch_size, derive_seed(rs, {kShuffle, epoch}));
        long double sum = 0.0L;
        for (std::size_t i = 0; i < batches.size(); ++i) {
            const auto& b = batches[i];
            const auto ch = draw_batch_channel(v, b.rows, cfg.ris_elements, cfg.train_snr_db, 0.0,
                                               derive_seed(rs, {kTrainChannel, epoch, i}));
            opt.zero_grad();
            auto loss = batch_loss(m, b, v, ch);
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw NumericalError("training diverged: loss " + num(lv) + " at epoch " + std::to_string(epoch) +
                                     " batch " + std::to_string(i));
            ad::backward(loss);
            if (!std::isfinite(opt.step()))
                throw NumericalError("training diverged: non-finite gradient at epoch " + std::to_string(epoch));
            sum += lv;
        }
        EpochLog e{epoch, static_cast<double>(sum / static_cast<long double>(batches.size())), 0.0};
        if (!data.val.empty()) {
            e.val_loss = corpus_loss(m, data.val, v, cfg.train_snr_db, 0.0, derive_seed(rs, {kValChannel}),
                                     cfg.ris_elements, cfg.eval_batch_size);
            if (!std::isfinite(e.val_loss)) throw NumericalError("validation loss not finite at epoch " + std::to_string(epoch));
            if (e.val_loss < best_val) {
                best_val = e.val_loss;
                best = snapshot(m);
                res.best_epoch = epoch;
            }
        } else {
            res.best_epoch = epoch;
        }
        res.log.push_back(e);
        if (on_epoch) on_epoch(e);
    }
    if (!best.empty()) restore(m, best);
    return res;
}

std::string format_log_line(const EpochLog& e) {
    return std::to_string(e.epoch) + "," + num(e.mean_loss) + "," + num(e.val_loss);
}

EvalOutput evaluate(const model::Transceiver& m, const text::EncodedCorpus& corpus, Variant v, double snr_db,
                    double epsilon, std::uint64_t seed, const ExperimentConfig& cfg, ChannelOptions opts) {
    const auto& shape = m.shape();
    for (const auto& row : corpus) {
        if (row.size() != shape.max_len)
            throw ConfigError("sentence width " + std::to_string(row.size()) + " does not match model max_len " +
                              std::to_string(shape.max_len));
        for (auto id : row)
            if (id < 0 || static_cast<std::size_t>(id) >= shape.vocab)
                throw ConfigError("token id " + std::to_string(id) + " outside the model vocabulary of " +
                                  std::to_string(shape.vocab));
    }
    // Channel draws depend on the replicate and SNR only, so variants and
    // epsilon values see the same propagation.
    const auto es = derive_seed(run_seed(cfg.master_seed, seed), {kEval, bits(snr_db)});

    EvalOutput out;
    out.row = RunRow{v, snr_db, epsilon, seed, 0.0, 0.0, 0.0, corpus.size()};
    if (corpus.empty()) return out;

    ad::NoGradGuard no_grad;
    std::vector<std::vector<text::TokenId>> refs;
    long double loss = 0.0L;
    const auto batches = text::make_ordered_batches(corpus, cfg.eval_batch_size);
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const auto& b = batches[i];
        const auto ch = draw_batch_channel(v, b.rows, cfg.ris_elements, snr_db, epsilon, derive_seed(es, {kBatch, i}), opts);
        const auto v_hat = transmit(m, b, v, ch);
        loss += static_cast<long double>(
                    metrics::cross_entropy_loss(m.semantic_decode(v_hat, model::decoder_inputs(b)), model::decoder_targets(b))
                        .item()) *
                static_cast<long double>(b.rows);
        const auto decoded = m.greedy_decode(v_hat, shape.max_len);
        for (std::size_t r = 0; r < b.rows; ++r) {
            refs.push_back(text::strip_specials(b.row(r)));
            out.decoded.push_back(text::strip_specials(decoded.row(r)));
        }
    }
    out.row.mean_loss = static_cast<double>(loss / static_cast<long double>(corpus.size()));
    if (!std::isfinite(out.row.mean_loss)) throw NumericalError("evaluation loss not finite");
    out.row.bleu1 = metrics::corpus_bleu<text::TokenId>(refs, out.decoded, metrics::BleuConfig::individual(1));
    out.row.bleu2 = metrics::corpus_bleu<text::TokenId>(refs, out.decoded, metrics::BleuConfig::individual(2));
    return out;
}

std::string format_row(const RunRow& r) {
    return std::string(variant_name(r.variant)) + "," + num(r.snr_db) + "," + num(r.epsilon) + "," +
           std::to_string(r.seed) + "," + num(r.bleu1) + "," + num(r.bleu2) + "," + num(r.mean_loss) + "," +
           std::to_string(r.n_sentences);
}

void write_results(const std::filesystem::path& path, std::span<const RunRow> rows, bool complete) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write " + tmp.string());
        os << kCsvHeader << '\n';
        for (const auto& r : rows) os << format_row(r) << '\n';
        if (!complete) os << kIncompleteMarker << ",,,,,,," << '\n';
        os.flush();
        if (!os) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

ResultFile read_results(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader) throw IoError("bad result header in " + path.string());
    ResultFile f;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.rfind(kIncompleteMarker, 0) == 0) {
            f.complete = false;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        if (cells.size() != 8) throw IoError("malformed result row: " + line);
        try {
            RunRow r;
            r.variant = parse_variant(cells[0]);
            r.snr_db = std::stod(cells[1]);
            r.epsilon = std::stod(cells[2]);
            r.seed = std::stoull(cells[3]);
            r.bleu1 = std::stod(cells[4]);
            r.bleu2 = std::stod(cells[5]);
            r.mean_loss = std::stod(cells[6]);
            r.n_sentences = std::stoull(cells[7]);
            f.rows.push_back(r);
        } catch (const std::exception&) {
            throw IoError("malformed result row: " + line);
        }
    }
    return f;
}

std::vector<SummaryRow> summarize(std::span<const RunRow> rows) {
    std::vector<SummaryRow> out;
    std::vector<std::array<long double, 3>> sums;
    for (const auto& r : rows) {
        std::size_t k = 0;
        while (k < out.size() &&
               !(out[k].variant == r.variant && out[k].snr_db == r.snr_db && out[k].epsilon == r.epsilon))
            ++k;
        if (k == out.size()) {
            out.push_back(SummaryRow{r.variant, r.snr_db, r.epsilon, 0.0, 0.0, 0.0, 0});
            sums.push_back({0.0L, 0.0L, 0.0L});
        }
        sums[k][0] += r.bleu1;
        sums[k][1] += r.bleu2;
        sums[k][2] += r.mean_loss;
        ++out[k].seeds;
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto n = static_cast<long double>(out[k].seeds);
        out[k].bleu1 = static_cast<double>(sums[k][0] / n);
        out[k].bleu2 = static_cast<double>(sums[k][1] / n);
        out[k].mean_loss = static_cast<double>(sums[k][2] / n);
    }
    return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, Variant v, std::uint64_t seed) {
    return dir / (std::string(variant_name(v)) + "_seed" + std::to_string(seed) + ".ckpt");
}

std::vector<RunRow> sweep(const ExperimentConfig& cfg, const PreparedData& data, const ModelProvider& models,
                          const std::filesystem::path& out, const std::atomic<bool>* cancel) {
    std::vector<RunRow> rows;
    try {
        for (auto v : cfg.variants)
            for (double snr : cfg.eval_snrs)
                for (double eps : cfg.epsilons)
                    for (auto seed : cfg.seeds) {
                        if (cancel && cancel->load()) {
                            write_results(out, rows, false);
                            return rows;
                        }
                        rows.push_back(evaluate(models(v, seed), data.test, v, snr, eps, seed, cfg).row);
                    }
    } catch (...) {
        write_results(out, rows, false);
        throw;
    }
    write_results(out, rows, true);
    return rows;
}

}  // namespace rissc::harness
