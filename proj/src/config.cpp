#include "rissc/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace rissc::config {

using harness::ConfigError;
using harness::ExperimentConfig;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T number(const std::string& key, const std::string& raw) {
    const auto s = trim(raw);
    T v{};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("bad value for " + key + ": '" + raw + "'");
    return v;
}

std::vector<std::string> split(const std::string& raw) {
    std::vector<std::string> out;
    std::stringstream ss(raw);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(trim(item));
    return out;
}

template <typename T>
std::vector<T> number_list(const std::string& key, const std::string& raw) {
    std::vector<T> out;
    for (const auto& s : split(raw)) out.push_back(number<T>(key, s));
    return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& raw) {
    std::filesystem::path p(trim(raw));
    if (p.empty()) return p;
    return p.is_absolute() ? p : base / p;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value,
                                  const std::filesystem::path& base)>;

template <typename T, typename F>
Setter num(F field) {
    return [field](ExperimentConfig& c, const std::string& k, const std::string& v, const std::filesystem::path&) {
        field(c) = number<T>(k, v);
    };
}

const std::map<std::string, std::map<std::string, Setter>>& schema() {
    static const std::map<std::string, std::map<std::string, Setter>> s{
        {"data",
         {
             {"train_corpus", [](ExperimentConfig& c, const std::string&, const std::string& v,
                                 const std::filesystem::path& b) { c.data.train_corpus = resolve(b, v); }},
             {"test_corpus", [](ExperimentConfig& c, const std::string&, const std::string& v,
                                const std::filesystem::path& b) { c.data.test_corpus = resolve(b, v); }},
             {"min_freq", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.data.min_freq; })},
             {"max_vocab", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.data.max_vocab; })},
             {"max_train_sentences",
              num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.data.max_train_sentences; })},
             {"max_test_sentences",
              num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.data.max_test_sentences; })},
             {"val_sentences", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.data.val_sentences; })},
         }},
        {"model",
         {
             {"max_len", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.shape.max_len; })},
             {"embed", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.shape.embed; })},
             {"feature", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.shape.feature; })},
             {"symbols_per_token",
              num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.shape.symbols_per_token; })},
             {"layers", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.shape.layers; })},
             {"heads", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.shape.heads; })},
             {"ffn", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.shape.ffn; })},
         }},
        {"channel",
         {
             {"ris_elements", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.ris_elements; })},
             {"train_snr_db", num<double>([](ExperimentConfig& c) -> auto& { return c.train_snr_db; })},
         }},
        {"train",
         {
             {"optimizer", [](ExperimentConfig& c, const std::string&, const std::string& v,
                              const std::filesystem::path&) { c.optimizer.kind = trim(v); }},
             {"learning_rate", num<double>([](ExperimentConfig& c) -> auto& { return c.optimizer.learning_rate; })},
             {"momentum", num<double>([](ExperimentConfig& c) -> auto& { return c.optimizer.momentum; })},
             {"clip_norm", num<double>([](ExperimentConfig& c) -> auto& { return c.optimizer.clip_norm; })},
             {"adam_beta1", num<double>([](ExperimentConfig& c) -> auto& { return c.optimizer.beta1; })},
             {"adam_beta2", num<double>([](ExperimentConfig& c) -> auto& { return c.optimizer.beta2; })},
             {"epochs", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.epochs; })},
             {"batch_size", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.batch_size; })},
         }},
        {"eval",
         {
             {"variants",
              [](ExperimentConfig& c, const std::string&, const std::string& v, const std::filesystem::path&) {
                  c.variants.clear();
                  for (const auto& s : split(v)) c.variants.push_back(harness::parse_variant(s));
              }},
             {"snr_db", [](ExperimentConfig& c, const std::string& k, const std::string& v,
                           const std::filesystem::path&) { c.eval_snrs = number_list<double>(k, v); }},
             {"epsilon", [](ExperimentConfig& c, const std::string& k, const std::string& v,
                            const std::filesystem::path&) { c.epsilons = number_list<double>(k, v); }},
             {"seeds", [](ExperimentConfig& c, const std::string& k, const std::string& v,
                          const std::filesystem::path&) { c.seeds = number_list<std::uint64_t>(k, v); }},
             {"batch_size", num<std::size_t>([](ExperimentConfig& c) -> auto& { return c.eval_batch_size; })},
         }},
        {"run",
         {
             {"master_seed", num<std::uint64_t>([](ExperimentConfig& c) -> auto& { return c.master_seed; })},
             {"output_dir", [](ExperimentConfig& c, const std::string&, const std::string& v,
                               const std::filesystem::path& b) { c.output_dir = resolve(b, v); }},
         }},
    };
    return s;
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
    return s;
}

}  // namespace

ExperimentConfig parse(const std::string& text, const std::filesystem::path& base_dir) {
    boost::property_tree::ptree tree;
    std::istringstream is(text);
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config syntax: " + e.message() + " at line " + std::to_string(e.line()));
    }
    ExperimentConfig cfg;
    const auto& sch = schema();
    for (const auto& [section, body] : tree) {
        const auto sec = sch.find(section);
        if (sec == sch.end()) throw ConfigError("unknown section or key outside a section: " + section);
        for (const auto& [key, value] : body) {
            const auto it = sec->second.find(key);
            if (it == sec->second.end()) throw ConfigError("unknown key " + section + "." + key);
            it->second(cfg, section + "." + key, value.data(), base_dir);
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw harness::IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

void check_paths(const ExperimentConfig& cfg) {
    for (const auto& p : {cfg.data.train_corpus, cfg.data.test_corpus}) {
        if (p.empty()) throw harness::IoError("corpus path not set");
        std::ifstream is(p);
        if (!is) throw harness::IoError("cannot read corpus " + p.string());
    }
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec || !std::filesystem::is_directory(cfg.output_dir))
        throw harness::IoError("cannot use output directory " + cfg.output_dir.string());
}

std::string render(const ExperimentConfig& c) {
    auto z = [](std::size_t v) { return std::to_string(v); };
    std::ostringstream os;
    os << "[data]\n"
       << "train_corpus = " << c.data.train_corpus.string() << "\n"
       << "test_corpus = " << c.data.test_corpus.string() << "\n"
       << "min_freq = " << c.data.min_freq << "\n"
       << "max_vocab = " << c.data.max_vocab << "\n"
       << "max_train_sentences = " << c.data.max_train_sentences << "\n"
       << "max_test_sentences = " << c.data.max_test_sentences << "\n"
       << "val_sentences = " << c.data.val_sentences << "\n\n"
       << "[model]\n"
       << "max_len = " << c.shape.max_len << "\n"
       << "embed = " << c.shape.embed << "\n"
       << "feature = " << c.shape.feature << "\n"
       << "symbols_per_token = " << c.shape.symbols_per_token << "\n"
       << "layers = " << c.shape.layers << "\n"
       << "heads = " << c.shape.heads << "\n"
       << "ffn = " << c.shape.ffn << "\n\n"
       << "[channel]\n"
       << "ris_elements = " << c.ris_elements << "\n"
       << "train_snr_db = " << fmt(c.train_snr_db) << "\n\n"
       << "[train]\n"
       << "optimizer = " << c.optimizer.kind << "\n"
       << "learning_rate = " << fmt(c.optimizer.learning_rate) << "\n"
       << "momentum = " << fmt(c.optimizer.momentum) << "\n"
       << "clip_norm = " << fmt(c.optimizer.clip_norm) << "\n"
       << "adam_beta1 = " << fmt(c.optimizer.beta1) << "\n"
       << "adam_beta2 = " << fmt(c.optimizer.beta2) << "\n"
       << "epochs = " << c.epochs << "\n"
       << "batch_size = " << c.batch_size << "\n\n"
       << "[eval]\n"
       << "variants = " << join(c.variants, [](harness::Variant v) { return std::string(harness::variant_name(v)); }) << "\n"
       << "snr_db = " << join(c.eval_snrs, fmt) << "\n"
       << "epsilon = " << join(c.epsilons, fmt) << "\n"
       << "seeds = " << join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }) << "\n"
       << "batch_size = " << z(c.eval_batch_size) << "\n\n"
       << "[run]\n"
       << "master_seed = " << c.master_seed << "\n"
       << "output_dir = " << c.output_dir.string() << "\n";
    return os.str();
}

}  // namespace rissc::config
