#include "rissc/transceiver.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "rissc/ops.hpp"

namespace rissc::model {

using ad::Tensor;
using text::TokenBatch;
using text::TokenId;

void ShapeConfig::validate() const {
    auto positive = [](std::size_t v, const char* what) {
        if (v == 0) throw std::invalid_argument(std::string("shape: ") + what + " must be positive");
    };
    positive(max_len, "max_len");
    positive(embed, "embed");
    positive(feature, "feature");
    positive(symbols_per_token, "symbols_per_token");
    positive(layers, "layers");
    positive(heads, "heads");
    positive(ffn, "ffn");
    if (vocab <= text::kNumReserved) throw std::invalid_argument("shape: vocabulary has no corpus tokens");
    if (max_len < 3) throw std::invalid_argument("shape: max_len must be at least 3");
    if (embed % heads != 0) throw std::invalid_argument("shape: embed must be divisible by heads");
}

Tensor& ParamSet::add(const std::string& name, Tensor t) {
    for (auto& [n, _] : entries_)
        if (n == name) throw std::invalid_argument("duplicate parameter " + name);
    entries_.emplace_back(name, std::move(t));
    return entries_.back().second;
}

const Tensor& ParamSet::get(const std::string& name) const {
    for (auto& [n, t] : entries_)
        if (n == name) return t;
    throw std::out_of_range("no parameter named " + name);
}

Tensor& ParamSet::get(const std::string& name) {
    return const_cast<Tensor&>(static_cast<const ParamSet&>(*this).get(name));
}

std::vector<ad::NamedTensor> TransceiverParams::all() const {
    std::vector<ad::NamedTensor> out;
    auto append = [&](const ParamSet& s, const char* prefix) {
        for (auto& [n, t] : s.entries()) out.emplace_back(std::string(prefix) + "." + n, t);
    };
    append(alpha, "alpha");
    append(beta, "beta");
    append(delta, "delta");
    append(chi, "chi");
    return out;
}

SymbolStream power_normalize(const Tensor& raw, double floor) {
    SymbolStream s;
    s.symbols = ad::normalize_mean_power(raw, floor);
    double total = 0.0;
    for (double v : s.symbols.data()) total += v * v;
    s.mean_power = total / static_cast<double>(raw.size() / 2);
    return s;
}

namespace {

Tensor xavier(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-a, a);
    std::vector<double> v(in * out);
    for (auto& x : v) x = u(rng);
    return Tensor::from_data({in, out}, std::move(v), true);
}

void add_linear(ParamSet& p, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
    p.add(name + ".w", xavier(in, out, rng));
    p.add(name + ".b", Tensor::zeros({out}, true));
}

void add_norm(ParamSet& p, const std::string& name, std::size_t d) {
    p.add(name + ".gain", Tensor::full({d}, 1.0, true));
    p.add(name + ".bias", Tensor::zeros({d}, true));
}

void add_attention(ParamSet& p, const std::string& name, std::size_t e, std::mt19937_64& rng) {
    for (const char* proj : {"q", "k", "v", "o"}) add_linear(p, name + "." + proj, e, e, rng);
}

Tensor dense(const ParamSet& p, const std::string& name, const Tensor& x) {
    return ad::linear(x, p.get(name + ".w"), p.get(name + ".b"));
}

Tensor norm(const ParamSet& p, const std::string& name, const Tensor& x) {
    return ad::layer_norm(x, p.get(name + ".gain"), p.get(name + ".bias"));
}

// [B, L, E] -> [B*H, L, E/H]
Tensor split_heads(const Tensor& x, std::size_t heads) {
    const auto b = x.dim(0), l = x.dim(1), e = x.dim(2);
    auto t = ad::swap_axes12(ad::reshape(x, {b, l, heads, e / heads}));
    return ad::reshape(t, {b * heads, l, e / heads});
}

Tensor merge_heads(const Tensor& x, std::size_t batch) {
    const auto bh = x.dim(0), l = x.dim(1), d = x.dim(2);
    const auto heads = bh / batch;
    auto t = ad::swap_axes12(ad::reshape(x, {batch, heads, l, d}));
    return ad::reshape(t, {batch, l, heads * d});
}

// `mask` is additive, broadcastable onto [B*H, Lq, Lk], or undefined.
Tensor attention(const ParamSet& p, const std::string& name, const Tensor& query_in, const Tensor& kv_in,
                 std::size_t heads, const Tensor& mask) {
    const auto batch = query_in.dim(0);
    const auto e = query_in.dim(2);
    auto q = split_heads(dense(p, name + ".q", query_in), heads);
    auto k = split_heads(dense(p, name + ".k", kv_in), heads);
    auto v = split_heads(dense(p, name + ".v", kv_in), heads);
    auto scores = ad::scale(ad::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(e / heads)));
    if (mask.defined()) scores = ad::add(scores, mask);
    auto ctx = ad::bmm(ad::softmax(scores, 2), v);
    return dense(p, name + ".o", merge_heads(ctx, batch));
}

Tensor feed_forward(const ParamSet& p, const std::string& name, const Tensor& x) {
    return dense(p, name + ".2", ad::relu(dense(p, name + ".1", x)));
}

constexpr double kMasked = -1e9;

}  // namespace

Transceiver::Transceiver(const ShapeConfig& shape, std::uint64_t init_seed) : shape_(shape) {
    shape_.validate();
    init(init_seed);
}

void Transceiver::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto e = shape_.embed, f = shape_.ffn, c2 = 2 * shape_.symbols_per_token;
    params_ = {};
    {
        std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(e)));
        std::vector<double> emb(shape_.vocab * e);
        for (auto& v : emb) v = nd(rng);
        params_.alpha.add("embed", Tensor::from_data({shape_.vocab, e}, std::move(emb), true));
    }
    for (std::size_t l = 0; l < shape_.layers; ++l) {
        const auto pre = "layer" + std::to_string(l);
        add_attention(params_.alpha, pre + ".self", e, rng);
        add_norm(params_.alpha, pre + ".norm1", e);
        add_linear(params_.alpha, pre + ".ffn.1", e, f, rng);
        add_linear(params_.alpha, pre + ".ffn.2", f, e, rng);
        add_norm(params_.alpha, pre + ".norm2", e);
    }
    add_linear(params_.beta, "fc1", e, f, rng);
    add_linear(params_.beta, "fc2", f, c2, rng);

    add_linear(params_.delta, "fc1", c2, f, rng);
    add_linear(params_.delta, "fc2", f, shape_.feature, rng);

    {
        std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(e)));
        std::vector<double> emb(shape_.vocab * e);
        for (auto& v : emb) v = nd(rng);
        params_.chi.add("embed", Tensor::from_data({shape_.vocab, e}, std::move(emb), true));
    }
    if (shape_.feature != e) add_linear(params_.chi, "memory", shape_.feature, e, rng);
    for (std::size_t l = 0; l < shape_.layers; ++l) {
        const auto pre = "layer" + std::to_string(l);
        add_attention(params_.chi, pre + ".self", e, rng);
        add_norm(params_.chi, pre + ".norm1", e);
        add_attention(params_.chi, pre + ".cross", e, rng);
        add_norm(params_.chi, pre + ".norm2", e);
        add_linear(params_.chi, pre + ".ffn.1", e, f, rng);
        add_linear(params_.chi, pre + ".ffn.2", f, e, rng);
        add_norm(params_.chi, pre + ".norm3", e);
    }
    add_linear(params_.chi, "out", e, shape_.vocab, rng);

    std::vector<double> pe(shape_.max_len * e);
    for (std::size_t pos = 0; pos < shape_.max_len; ++pos)
        for (std::size_t i = 0; i < e; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(e));
            pe[pos * e + i] = std::sin(static_cast<double>(pos) * freq);
            if (i + 1 < e) pe[pos * e + i + 1] = std::cos(static_cast<double>(pos) * freq);
        }
    pos_table_ = Tensor::from_data({shape_.max_len, e}, std::move(pe));
}

Tensor Transceiver::positions(std::size_t len) const {
    if (len > shape_.max_len) throw ad::ShapeError("sequence longer than max_len");
    const auto e = shape_.embed;
    std::vector<double> v(pos_table_.data().begin(), pos_table_.data().begin() + static_cast<std::ptrdiff_t>(len * e));
    return Tensor::from_data({len, e}, std::move(v));
}

Tensor Transceiver::semantic_encode(const TokenBatch& batch) const {
    const auto b = batch.rows, l = batch.cols, e = shape_.embed, h = shape_.heads;
    if (l != shape_.max_len)
        throw ad::ShapeError("semantic_encode: batch width " + std::to_string(l) + " != max_len " + std::to_string(shape_.max_len));
    auto x = ad::embedding(params_.alpha.get("embed"), batch.ids, {b, l});
    x = ad::add(ad::scale(x, std::sqrt(static_cast<double>(e))), positions(l));

    // Padded keys are masked; key 0 always stays visible so fully padded rows stay finite.
    std::vector<double> mask(b * h * l * l, 0.0);
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t hh = 0; hh < h; ++hh)
            for (std::size_t i = 0; i < l; ++i)
                for (std::size_t j = 1; j < l; ++j)
                    if (batch.pad_mask[r * l + j]) mask[((r * h + hh) * l + i) * l + j] = kMasked;
    const auto key_mask = Tensor::from_data({b * h, l, l}, std::move(mask));

    const auto& p = params_.alpha;
    for (std::size_t layer = 0; layer < shape_.layers; ++layer) {
        const auto pre = "layer" + std::to_string(layer);
        x = norm(p, pre + ".norm1", ad::add(x, attention(p, pre + ".self", x, x, h, key_mask)));
        x = norm(p, pre + ".norm2", ad::add(x, feed_forward(p, pre + ".ffn", x)));
    }
    return x;
}

SymbolStream Transceiver::channel_encode(const Tensor& features) const {
    const auto b = features.dim(0), l = features.dim(1);
    auto raw = dense(params_.beta, "fc2", ad::relu(dense(params_.beta, "fc1", features)));
    return power_normalize(ad::reshape(raw, {b, l * shape_.symbols_per_token, 2}));
}

Tensor Transceiver::channel_decode(const Tensor& received) const {
    const auto b = received.dim(0);
    const auto c2 = 2 * shape_.symbols_per_token;
    if (received.rank() != 3 || received.dim(2) != 2 || received.dim(1) != shape_.symbols())
        throw ad::ShapeError("channel_decode: expected [B, " + std::to_string(shape_.symbols()) + ", 2], got " +
                             ad::shape_str(received.shape()));
    auto x = ad::reshape(received, {b, shape_.max_len, c2});
    return dense(params_.delta, "fc2", ad::relu(dense(params_.delta, "fc1", x)));
}

Tensor Transceiver::semantic_decode(const Tensor& v_hat, const TokenBatch& prefix) const {
    const auto b = prefix.rows, l = prefix.cols, e = shape_.embed, h = shape_.heads;
    if (v_hat.rank() != 3 || v_hat.dim(0) != b || v_hat.dim(2) != shape_.feature)
        throw ad::ShapeError("semantic_decode: features " + ad::shape_str(v_hat.shape()) + " do not match prefix batch");
    const auto& p = params_.chi;
    auto memory = shape_.feature != e ? dense(p, "memory", v_hat) : v_hat;

    auto x = ad::embedding(p.get("embed"), prefix.ids, {b, l});
    x = ad::add(ad::scale(x, std::sqrt(static_cast<double>(e))), positions(l));

    std::vector<double> causal(l * l, 0.0);
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = i + 1; j < l; ++j) causal[i * l + j] = kMasked;
    const auto causal_mask = Tensor::from_data({l, l}, std::move(causal));

    for (std::size_t layer = 0; layer < shape_.layers; ++layer) {
        const auto pre = "layer" + std::to_string(layer);
        x = norm(p, pre + ".norm1", ad::add(x, attention(p, pre + ".self", x, x, h, causal_mask)));
        x = norm(p, pre + ".norm2", ad::add(x, attention(p, pre + ".cross", x, memory, h, Tensor{})));
        x = norm(p, pre + ".norm3", ad::add(x, feed_forward(p, pre + ".ffn", x)));
    }
    return dense(p, "out", x);
}

TokenBatch Transceiver::greedy_decode(const Tensor& v_hat, std::size_t max_len) const {
    if (max_len < 2 || max_len > shape_.max_len) throw std::invalid_argument("greedy_decode: max_len out of range");
    ad::NoGradGuard no_grad;
    const auto b = v_hat.dim(0), vocab = shape_.vocab;
    std::vector<std::vector<TokenId>> rows(b, std::vector<TokenId>{text::kStart});
    std::vector<bool> done(b, false);
    for (std::size_t step = 1; step < max_len; ++step) {
        TokenBatch prefix = TokenBatch::from_rows(rows);
        const auto logits = semantic_decode(v_hat, prefix);
        const auto z = logits.data();
        bool all_done = true;
        for (std::size_t r = 0; r < b; ++r) {
            if (done[r]) {
                rows[r].push_back(text::kPad);
                continue;
            }
            const double* last = z.data() + (r * step + (step - 1)) * vocab;
            std::size_t best = 0;
            for (std::size_t v = 1; v < vocab; ++v)
                if (last[v] > last[best]) best = v;
            rows[r].push_back(static_cast<TokenId>(best));
            done[r] = best == static_cast<std::size_t>(text::kEnd);
            all_done = all_done && done[r];
        }
        if (all_done) break;
    }
    for (auto& r : rows) r.resize(max_len, text::kPad);
    return TokenBatch::from_rows(rows);
}

TokenBatch decoder_inputs(const TokenBatch& batch) {
    std::vector<std::vector<TokenId>> rows;
    for (std::size_t r = 0; r < batch.rows; ++r) {
        auto row = batch.row(r);
        rows.emplace_back(row.begin(), row.end() - 1);
    }
    return TokenBatch::from_rows(rows);
}

std::vector<TokenId> decoder_targets(const TokenBatch& batch) {
    std::vector<TokenId> out;
    out.reserve(batch.rows * (batch.cols - 1));
    for (std::size_t r = 0; r < batch.rows; ++r) {
        auto row = batch.row(r);
        out.insert(out.end(), row.begin() + 1, row.end());
    }
    return out;
}

// ---- checkpoint I/O ------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'S', 'C', '1'};

template <typename T>
void put_le(std::ostream& os, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto u = std::bit_cast<U>(v);
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename T>
bool get_le(std::istream& is, T& v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) return false;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
    v = std::bit_cast<T>(u);
    return true;
}

const char* kShapeRecord = "config.shape";

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<ad::NamedTensor>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    os.write(kMagic, 4);
    put_le(os, kCheckpointVersion);
    for (const auto& [name, t] : tensors) {
        put_le(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_le(os, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put_le(os, static_cast<std::uint64_t>(d));
        for (double v : t.data()) put_le(os, v);
    }
    if (!os) throw CheckpointError("write failed: " + path.string());
}

std::vector<ad::NamedTensor> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
    std::error_code ec;
    const auto file_size = std::filesystem::file_size(path, ec);
    if (ec) throw CheckpointError("cannot stat checkpoint: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("bad checkpoint magic in " + path.string());
    std::uint32_t version = 0;
    if (!get_le(is, version) || version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    std::vector<ad::NamedTensor> out;
    std::uint32_t name_len = 0;
    while (get_le(is, name_len)) {
        if (name_len > 4096) throw CheckpointError("corrupt record name length");
        std::string name(name_len, '\0');
        std::uint32_t rank = 0;
        if (!is.read(name.data(), name_len) || !get_le(is, rank) || rank > 8)
            throw CheckpointError("truncated record header in " + path.string());
        ad::Shape shape(rank);
        std::uint64_t count = 1;
        for (auto& d : shape) {
            std::uint64_t v = 0;
            if (!get_le(is, v) || v == 0 || v > file_size / 8 / count) throw CheckpointError("corrupt dims for " + name);
            count *= v;
            d = static_cast<std::size_t>(v);
        }
        std::vector<double> data(ad::numel(shape));
        for (auto& v : data)
            if (!get_le(is, v)) throw CheckpointError("truncated data for " + name);
            else if (!std::isfinite(v)) throw CheckpointError("non-finite value in " + name);
        out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
    }
    return out;
}

void Transceiver::save(const std::filesystem::path& path) const {
    const auto& s = shape_;
    std::vector<double> cfg{static_cast<double>(s.max_len), static_cast<double>(s.embed), static_cast<double>(s.feature),
                            static_cast<double>(s.symbols_per_token), static_cast<double>(s.layers),
                            static_cast<double>(s.heads), static_cast<double>(s.ffn), static_cast<double>(s.vocab)};
    const ad::Shape cfg_shape{cfg.size()};
    std::vector<ad::NamedTensor> records{{kShapeRecord, Tensor::from_data(cfg_shape, std::move(cfg))}};
    for (auto& nt : params_.all()) records.push_back(nt);
    write_checkpoint(path, records);
}

Transceiver Transceiver::load(const std::filesystem::path& path) {
    auto records = read_checkpoint(path);
    if (records.empty() || records.front().first != kShapeRecord || records.front().second.size() != 8)
        throw CheckpointError("checkpoint lacks shape record: " + path.string());
    const auto c = records.front().second.data();
    ShapeConfig s;
    s.max_len = static_cast<std::size_t>(c[0]);
    s.embed = static_cast<std::size_t>(c[1]);
    s.feature = static_cast<std::size_t>(c[2]);
    s.symbols_per_token = static_cast<std::size_t>(c[3]);
    s.layers = static_cast<std::size_t>(c[4]);
    s.heads = static_cast<std::size_t>(c[5]);
    s.ffn = static_cast<std::size_t>(c[6]);
    s.vocab = static_cast<std::size_t>(c[7]);
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint shape invalid: ") + e.what());
    }
    Transceiver t(s, 0);
    auto expected = t.params_.all();
    if (records.size() != expected.size() + 1)
        throw CheckpointError("checkpoint holds " + std::to_string(records.size() - 1) + " tensors, model expects " +
                              std::to_string(expected.size()));
    for (std::size_t i = 0; i < expected.size(); ++i) {
        auto& [name, dst] = expected[i];
        const auto& [rname, src] = records[i + 1];
        if (rname != name || src.shape() != dst.shape())
            throw CheckpointError("checkpoint record " + rname + " " + ad::shape_str(src.shape()) + " does not match " +
                                  name + " " + ad::shape_str(dst.shape()));
        auto d = dst.mutable_data();
        std::copy(src.data().begin(), src.data().end(), d.begin());
    }
    return t;
}

}  // namespace rissc::model
