#pragma once

// Semantic encoder (alpha), channel encoder (beta), channel decoder (delta)
// and semantic decoder (chi).
//
// Shapes: token ids [B, L] -> features u [B, L, E] -> symbols [B, C*L, 2]
// -> (channel) -> [B, C*L, 2] -> v_hat [B, L, F] -> logits [B, L', V].

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rissc/gradcheck.hpp"
#include "rissc/tensor.hpp"
#include "rissc/text.hpp"

namespace rissc::model {

inline constexpr double kPowerFloor = 1e-12;

struct ShapeConfig {
    std::size_t max_len = 22;          // L, tokens per padded sentence
    std::size_t embed = 64;            // E
    std::size_t feature = 64;          // F, width of v_hat (tied to E by default)
    std::size_t symbols_per_token = 8; // C
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t ffn = 128;
    std::size_t vocab = 0;

    std::size_t symbols() const { return symbols_per_token * max_len; }  // M
    void validate() const;  // throws std::invalid_argument
    friend bool operator==(const ShapeConfig&, const ShapeConfig&) = default;
};

class ParamSet {
public:
    ad::Tensor& add(const std::string& name, ad::Tensor t);
    const ad::Tensor& get(const std::string& name) const;
    ad::Tensor& get(const std::string& name);

    std::vector<ad::NamedTensor>& entries() { return entries_; }
    const std::vector<ad::NamedTensor>& entries() const { return entries_; }

private:
    std::vector<ad::NamedTensor> entries_;
};

struct TransceiverParams {
    ParamSet alpha;  // semantic encoder
    ParamSet beta;   // channel encoder
    ParamSet delta;  // channel decoder
    ParamSet chi;    // semantic decoder

    // Handles to every trainable tensor, names prefixed with the set name.
    std::vector<ad::NamedTensor> all() const;
};

struct SymbolStream {
    ad::Tensor symbols;       // [B, M, 2]
    double mean_power = 0.0;  // batch-mean re^2 + im^2 after normalization
};

// Scales to unit batch-mean symbol power; all-zero input stays zero.
SymbolStream power_normalize(const ad::Tensor& raw, double floor = kPowerFloor);

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Transceiver {
public:
    Transceiver(const ShapeConfig& shape, std::uint64_t init_seed);

    const ShapeConfig& shape() const { return shape_; }
    TransceiverParams& params() { return params_; }
    const TransceiverParams& params() const { return params_; }

    ad::Tensor semantic_encode(const text::TokenBatch& batch) const;
    SymbolStream channel_encode(const ad::Tensor& features) const;
    ad::Tensor channel_decode(const ad::Tensor& received) const;
    // Teacher-forced next-token logits for every prefix position.
    ad::Tensor semantic_decode(const ad::Tensor& v_hat, const text::TokenBatch& prefix) const;
    // Autoregressive argmax from START; rows stop at END, output padded to max_len.
    text::TokenBatch greedy_decode(const ad::Tensor& v_hat, std::size_t max_len) const;

    void save(const std::filesystem::path& path) const;
    static Transceiver load(const std::filesystem::path& path);

private:
    Transceiver() = default;
    void init(std::uint64_t seed);
    ad::Tensor positions(std::size_t len) const;

    ShapeConfig shape_;
    TransceiverParams params_;
    ad::Tensor pos_table_;  // [max_len, E] sinusoidal
};

// Teacher-forcing split of a batch of full sentences: inputs drop the last
// column, targets drop the first.
text::TokenBatch decoder_inputs(const text::TokenBatch& batch);
std::vector<text::TokenId> decoder_targets(const text::TokenBatch& batch);

// Raw checkpoint container: magic "RSC1", u32 version, then records of
// (u32 name length, name, u32 rank, u64 dims..., little-endian f64 data).
inline constexpr std::uint32_t kCheckpointVersion = 1;
void write_checkpoint(const std::filesystem::path& path, const std::vector<ad::NamedTensor>& tensors);
std::vector<ad::NamedTensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace rissc::model
