#pragma once

// Corpus ingestion, vocabulary and padded batches.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rissc::text {

using TokenId = std::int64_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kStart = 1;
inline constexpr TokenId kEnd = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumReserved = 4;

inline constexpr std::size_t kMinWords = 4;
inline constexpr std::size_t kMaxWords = 30;

class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Lowercases ASCII, splits on whitespace and emits each ASCII punctuation
// character as its own token.
std::vector<std::string> tokenize(std::string_view sentence);

class Vocabulary {
public:
    Vocabulary();

    // Adds a corpus token; returns its id. Reserved spellings are rejected.
    TokenId add(const std::string& token);

    TokenId id(const std::string& token) const;  // kUnk when absent
    const std::string& token(TokenId id) const;
    bool contains(const std::string& token) const { return index_.count(token) != 0; }
    std::size_t size() const { return tokens_.size(); }

    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

// Reserved-token spellings, in id order.
const std::vector<std::string>& reserved_tokens();

// Most frequent first, ties broken lexicographically; max_size bounds the
// number of corpus tokens (reserved ids are extra).
Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t min_freq, std::size_t max_size);

// START + ids + END, right-padded with PAD to max_len.
std::vector<TokenId> encode_sentence(std::string_view sentence, const Vocabulary& vocab, std::size_t max_len);

// Tokens strictly between START and the first END, specials dropped.
std::vector<std::string> decode(std::span<const TokenId> ids, const Vocabulary& vocab);

// Ids strictly between START and the first END, PAD dropped.
std::vector<TokenId> strip_specials(std::span<const TokenId> ids);

// Keeps sentences whose token count lies in [kMinWords, min(kMaxWords, max_len - 2)].
std::vector<std::string> length_filter(std::span<const std::string> corpus, std::size_t max_len);

std::vector<std::string> read_corpus(const std::filesystem::path& path);

struct TokenBatch {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<TokenId> ids;       // rows x cols, row-major
    std::vector<std::uint8_t> pad_mask;
    std::vector<std::size_t> lengths;  // non-PAD tokens per row

    std::span<const TokenId> row(std::size_t r) const { return {ids.data() + r * cols, cols}; }
    TokenId at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }

    static TokenBatch from_rows(std::span<const std::vector<TokenId>> rows);
};

using EncodedCorpus = std::vector<std::vector<TokenId>>;

EncodedCorpus encode_corpus(std::span<const std::string> sentences, const Vocabulary& vocab, std::size_t max_len);

// Seeded permutation, then consecutive groups of batch_size; the last batch may be short.
std::vector<TokenBatch> make_batches(const EncodedCorpus& corpus, std::size_t batch_size, std::uint64_t shuffle_seed);

// Same, without shuffling.
std::vector<TokenBatch> make_ordered_batches(const EncodedCorpus& corpus, std::size_t batch_size);

}  // namespace rissc::text
