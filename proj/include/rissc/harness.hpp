#pragma once

// Training loop, system variants, evaluation and result sweeps.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rissc/channel.hpp"
#include "rissc/optim.hpp"
#include "rissc/text.hpp"
#include "rissc/transceiver.hpp"

namespace rissc::harness {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Variant { Ris, PointToPoint, UpperBound };

std::string_view variant_name(Variant v);  // "RIS", "POINT_TO_POINT", "UPPER_BOUND"
Variant parse_variant(std::string_view name);  // throws ConfigError

struct DataConfig {
    std::filesystem::path train_corpus;
    std::filesystem::path test_corpus;
    std::size_t min_freq = 1;
    std::size_t max_vocab = 4000;
    std::size_t max_train_sentences = 0;  // 0 keeps all
    std::size_t max_test_sentences = 0;
    std::size_t val_sentences = 200;      // taken from the tail of the training file
};

struct ExperimentConfig {
    model::ShapeConfig shape;
    std::vector<Variant> variants{Variant::Ris, Variant::PointToPoint, Variant::UpperBound};
    double train_snr_db = 7.0;
    std::size_t ris_elements = 10;
    optim::OptimizerConfig optimizer;
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    std::size_t eval_batch_size = 128;
    std::vector<double> eval_snrs{0, 3, 6, 9, 12, 15, 18};
    std::vector<double> epsilons{0.0};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::uint64_t master_seed = 0;
    DataConfig data;
    std::filesystem::path output_dir = "runs";

    void validate() const;  // throws ConfigError
};

struct PreparedData {
    text::Vocabulary vocab;
    text::EncodedCorpus train;
    text::EncodedCorpus val;
    text::EncodedCorpus test;
};

// Length-filters, splits the validation tail off the training sentences,
// builds the vocabulary from the rest and encodes everything.
PreparedData prepare_data(std::span<const std::string> train_sentences, std::span<const std::string> test_sentences,
                          const ExperimentConfig& cfg);
PreparedData prepare_data(const ExperimentConfig& cfg);  // reads cfg.data paths; IoError on failure

// One block-fading draw per batch row, already reduced to what the receiver
// sees. Unused by UPPER_BOUND.
struct BatchChannel {
    std::vector<channel::LinkState> links;
    double sigma2 = 0.0;
    std::uint64_t noise_seed = 0;
};

struct ChannelOptions {
    bool force_ris_off = false;  // RIS path with every gamma set to zero
};

// True channels from one stream, CSI errors from another, so epsilon never
// changes the propagation draw.
BatchChannel draw_batch_channel(Variant v, std::size_t rows, std::size_t elements, double snr_db, double epsilon,
                                std::uint64_t seed, ChannelOptions opts = {});

// Token batch -> v_hat through the variant's channel.
ad::Tensor transmit(const model::Transceiver& m, const text::TokenBatch& batch, Variant v, const BatchChannel& ch);

// Teacher-forced loss of a full batch.
ad::Tensor batch_loss(const model::Transceiver& m, const text::TokenBatch& batch, Variant v, const BatchChannel& ch);

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    model::Transceiver model;
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
};

// Seeds for a replicate: initialization and data order do not depend on the
// variant, so variants trained with the same seed are paired.
std::uint64_t run_seed(std::uint64_t master_seed, std::uint64_t seed);

// Throws NumericalError when a batch loss is not finite.
TrainResult train(const ExperimentConfig& cfg, const PreparedData& data, Variant v, std::uint64_t seed,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

std::string format_log_line(const EpochLog& e);  // "epoch,mean_loss,val_loss"

struct RunRow {
    Variant variant = Variant::Ris;
    double snr_db = 0.0;
    double epsilon = 0.0;
    std::uint64_t seed = 0;
    double bleu1 = 0.0;
    double bleu2 = 0.0;
    double mean_loss = 0.0;
    std::size_t n_sentences = 0;
};

struct EvalOutput {
    RunRow row;
    std::vector<std::vector<text::TokenId>> decoded;  // specials stripped
};

// Greedy decoding of every sentence under (snr, epsilon); corpus BLEU-1/2.
EvalOutput evaluate(const model::Transceiver& m, const text::EncodedCorpus& corpus, Variant v, double snr_db,
                    double epsilon, std::uint64_t seed, const ExperimentConfig& cfg, ChannelOptions opts = {});

inline constexpr std::string_view kCsvHeader = "variant,snr_db,epsilon,seed,bleu1,bleu2,mean_loss,n_sentences";
inline constexpr std::string_view kIncompleteMarker = "INCOMPLETE";

std::string format_row(const RunRow& r);
// Temp file + rename. An incomplete file ends with a marker row.
void write_results(const std::filesystem::path& path, std::span<const RunRow> rows, bool complete);

struct ResultFile {
    std::vector<RunRow> rows;
    bool complete = true;
};
ResultFile read_results(const std::filesystem::path& path);

struct SummaryRow {
    Variant variant = Variant::Ris;
    double snr_db = 0.0;
    double epsilon = 0.0;
    double bleu1 = 0.0;
    double bleu2 = 0.0;
    double mean_loss = 0.0;
    std::size_t seeds = 0;
};

// Mean over seeds for each (variant, snr, epsilon), first-seen order.
std::vector<SummaryRow> summarize(std::span<const RunRow> rows);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, Variant v, std::uint64_t seed);

using ModelProvider = std::function<const model::Transceiver&(Variant, std::uint64_t)>;

// variants x snrs x epsilons x seeds in config order. When `cancel` is set
// between cells, or a cell throws, the rows done so far are written with the
// incomplete marker (and the exception rethrown).
std::vector<RunRow> sweep(const ExperimentConfig& cfg, const PreparedData& data, const ModelProvider& models,
                          const std::filesystem::path& out, const std::atomic<bool>* cancel = nullptr);

}  // namespace rissc::harness
