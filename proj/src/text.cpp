#include "rissc/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

namespace rissc::text {

const std::vector<std::string>& reserved_tokens() {
    static const std::vector<std::string> r{"<pad>", "<start>", "<end>", "<unk>"};
    return r;
}

std::vector<std::string> tokenize(std::string_view sentence) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : sentence) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 128 && std::isspace(c)) {
            flush();
        } else if (c < 128 && std::ispunct(c)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            cur.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    flush();
    return out;
}

Vocabulary::Vocabulary() {
    for (const auto& r : reserved_tokens()) {
        index_.emplace(r, static_cast<TokenId>(tokens_.size()));
        tokens_.push_back(r);
    }
}

TokenId Vocabulary::add(const std::string& token) {
    if (token.empty()) throw IngestionError("empty token");
    if (auto it = index_.find(token); it != index_.end()) {
        if (it->second < static_cast<TokenId>(kNumReserved))
            throw IngestionError("corpus token collides with reserved token " + token);
        return it->second;
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
}

TokenId Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end() || it->second < static_cast<TokenId>(kNumReserved)) return kUnk;
    return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw ContractViolation("token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IngestionError("cannot write vocabulary " + path.string());
    for (const auto& t : tokens_) os << t << '\n';
    if (!os) throw IngestionError("write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestionError("cannot read vocabulary " + path.string());
    Vocabulary v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        if (lineno < kNumReserved) {
            if (line != reserved_tokens()[lineno])
                throw IngestionError("vocabulary header line " + std::to_string(lineno + 1) + " is not " +
                                     reserved_tokens()[lineno]);
        } else {
            if (v.contains(line)) throw IngestionError("duplicate vocabulary token '" + line + "'");
            v.add(line);
        }
        ++lineno;
    }
    if (lineno < kNumReserved) throw IngestionError("vocabulary file " + path.string() + " lacks reserved header");
    return v;
}

Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t min_freq, std::size_t max_size) {
    if (corpus.empty()) throw IngestionError("empty corpus");
    std::map<std::string, std::size_t> freq;
    for (const auto& s : corpus)
        for (auto& t : tokenize(s)) ++freq[t];
    std::vector<std::pair<std::string, std::size_t>> items;
    for (auto& [t, c] : freq)
        if (c >= min_freq) items.emplace_back(t, c);
    // std::map iteration is lexicographic, so a stable sort keeps ties ordered.
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (items.size() > max_size) items.resize(max_size);
    Vocabulary v;
    for (auto& [t, c] : items) v.add(t);
    return v;
}

std::vector<TokenId> encode_sentence(std::string_view sentence, const Vocabulary& vocab, std::size_t max_len) {
    if (max_len < 3) throw ContractViolation("max_len must be at least 3");
    auto toks = tokenize(sentence);
    if (toks.size() > max_len - 2)
        throw ContractViolation("sentence of " + std::to_string(toks.size()) + " tokens exceeds max_len " +
                                std::to_string(max_len));
    std::vector<TokenId> ids(max_len, kPad);
    ids[0] = kStart;
    for (std::size_t i = 0; i < toks.size(); ++i) ids[i + 1] = vocab.id(toks[i]);
    ids[toks.size() + 1] = kEnd;
    return ids;
}

std::vector<TokenId> strip_specials(std::span<const TokenId> ids) {
    std::vector<TokenId> out;
    std::size_t i = (!ids.empty() && ids[0] == kStart) ? 1 : 0;
    for (; i < ids.size(); ++i) {
        if (ids[i] == kEnd) break;
        if (ids[i] == kPad || ids[i] == kStart) continue;
        out.push_back(ids[i]);
    }
    return out;
}

std::vector<std::string> decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
    std::vector<std::string> out;
    for (auto id : strip_specials(ids)) out.push_back(vocab.token(id));
    return out;
}

std::vector<std::string> length_filter(std::span<const std::string> corpus, std::size_t max_len) {
    const std::size_t hi = std::min(kMaxWords, max_len >= 2 ? max_len - 2 : 0);
    std::vector<std::string> out;
    for (const auto& s : corpus) {
        const auto n = tokenize(s).size();
        if (n >= kMinWords && n <= hi) out.push_back(s);
    }
    return out;
}

std::vector<std::string> read_corpus(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestionError("cannot read corpus " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(std::move(line));
    }
    if (out.empty()) throw IngestionError("corpus " + path.string() + " is empty");
    return out;
}

TokenBatch TokenBatch::from_rows(std::span<const std::vector<TokenId>> rows) {
    TokenBatch b;
    b.rows = rows.size();
    b.cols = rows.empty() ? 0 : rows[0].size();
    b.ids.reserve(b.rows * b.cols);
    for (const auto& r : rows) {
        if (r.size() != b.cols) throw ContractViolation("ragged batch rows");
        b.ids.insert(b.ids.end(), r.begin(), r.end());
        b.lengths.push_back(static_cast<std::size_t>(std::count_if(r.begin(), r.end(), [](TokenId t) { return t != kPad; })));
    }
    b.pad_mask.resize(b.ids.size());
    std::transform(b.ids.begin(), b.ids.end(), b.pad_mask.begin(), [](TokenId t) { return t == kPad ? 1 : 0; });
    return b;
}

EncodedCorpus encode_corpus(std::span<const std::string> sentences, const Vocabulary& vocab, std::size_t max_len) {
    EncodedCorpus out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) out.push_back(encode_sentence(s, vocab, max_len));
    return out;
}

namespace {

std::vector<TokenBatch> batches_in_order(const EncodedCorpus& corpus, std::span<const std::size_t> order,
                                         std::size_t batch_size) {
    if (corpus.empty()) throw IngestionError("empty corpus");
    if (batch_size == 0) throw ContractViolation("batch size must be positive");
    std::vector<TokenBatch> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        std::vector<std::vector<TokenId>> rows;
        for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j) rows.push_back(corpus[order[j]]);
        out.push_back(TokenBatch::from_rows(rows));
    }
    return out;
}

}  // namespace

std::vector<TokenBatch> make_batches(const EncodedCorpus& corpus, std::size_t batch_size, std::uint64_t shuffle_seed) {
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
    return batches_in_order(corpus, order, batch_size);
}

std::vector<TokenBatch> make_ordered_batches(const EncodedCorpus& corpus, std::size_t batch_size) {
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    return batches_in_order(corpus, order, batch_size);
}

}  // namespace rissc::text
