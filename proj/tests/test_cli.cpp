#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "rissc/config.hpp"
#include "rissc/corpus.hpp"
#include "rissc/harness.hpp"

using namespace rissc;

namespace {

namespace fs = std::filesystem;

fs::path workdir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("rissc_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run(const fs::path& dir, const std::string& args) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const auto cmd = std::string(RISSC_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string small_ini(const std::string& extra = "") {
    return "[data]\ntrain_corpus = train.txt\ntest_corpus = test.txt\nval_sentences = 10\n"
           "[model]\nmax_len = 18\nembed = 8\nfeature = 8\nsymbols_per_token = 2\nlayers = 1\nheads = 2\nffn = 16\n"
           "[channel]\nris_elements = 4\n"
           "[train]\noptimizer = adam\nlearning_rate = 0.005\nepochs = 1\nbatch_size = 16\n"
           "[eval]\nvariants = RIS, POINT_TO_POINT, UPPER_BOUND\nsnr_db = 0, 6\nepsilon = 0\nseeds = 1, 2\n"
           "[run]\nmaster_seed = 9\noutput_dir = out\n" +
           extra;
}

void write_corpora(const fs::path& dir) {
    std::string train, test;
    for (const auto& s : corpus::synthetic_sentences(80, 1)) train += s + "\n";
    for (const auto& s : corpus::synthetic_sentences(12, 2)) test += s + "\n";
    write(dir / "train.txt", train);
    write(dir / "test.txt", test);
}

}  // namespace

TEST_CASE("config parsing") {
    const auto cfg = config::parse(small_ini(), "/base");
    CHECK(cfg.shape.embed == 8);
    CHECK(cfg.optimizer.kind == "adam");
    CHECK(cfg.eval_snrs == std::vector<double>{0, 6});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(cfg.variants.size() == 3);
    CHECK(cfg.data.train_corpus == fs::path("/base/train.txt"));
    CHECK(cfg.output_dir == fs::path("/base/out"));

    SUBCASE("defaults for absent keys") {
        const auto d = config::parse("", "/b");
        const harness::ExperimentConfig ref;
        CHECK(d.shape == ref.shape);
        CHECK(d.train_snr_db == 7.0);
        CHECK(d.ris_elements == 10);
        CHECK(d.optimizer.kind == "sgd");
        CHECK(d.optimizer.learning_rate == 0.1);
        CHECK(d.optimizer.clip_norm == 1.0);
        CHECK(d.eval_snrs == std::vector<double>{0, 3, 6, 9, 12, 15, 18});
        CHECK(d.seeds == std::vector<std::uint64_t>{1, 2, 3});
    }
    SUBCASE("render round trip") {
        const auto again = config::parse(config::render(cfg), "/elsewhere");
        CHECK(config::render(again) == config::render(cfg));
    }
    SUBCASE("rejections") {
        CHECK_THROWS_AS(config::parse(small_ini("[train]\nlearning_rat = 1\n"), "/b"), harness::ConfigError);
        CHECK_THROWS_AS(config::parse("[trian]\nepochs = 1\n", "/b"), harness::ConfigError);
        CHECK_THROWS_AS(config::parse("[train]\nepochs = ten\n", "/b"), harness::ConfigError);
        CHECK_THROWS_AS(config::parse("[train]\nepochs = 3x\n", "/b"), harness::ConfigError);
        CHECK_THROWS_AS(config::parse("[eval]\nseeds = 1, 1\n", "/b"), harness::ConfigError);
        CHECK_THROWS_AS(config::parse("[eval]\nvariants = RIS, MIMO\n", "/b"), harness::ConfigError);
        CHECK_THROWS_AS(config::parse("[eval]\nepsilon = -0.1\n", "/b"), harness::ConfigError);
        CHECK_THROWS_AS(config::parse("epochs = 1\n", "/b"), harness::ConfigError);
        CHECK_THROWS_AS(config::parse("[train\n", "/b"), harness::ConfigError);
    }
}

TEST_CASE("cli phase-bench and bleu") {
    const auto dir = workdir("tools");
    auto a = run(dir, "phase-bench --n 10 --trials 200 --random 200 --seed 4");
    CHECK(a.code == 0);
    CHECK(a.out.find("beat_count=0\n") != std::string::npos);
    CHECK(run(dir, "phase-bench --n 10 --trials 200 --random 200 --seed 4").out == a.out);
    CHECK(run(dir, "phase-bench --n 0").code == 2);

    write(dir / "ref.txt", "I have an apple\na b c d\n");
    write(dir / "cand.txt", "a b c d e\n");
    auto same = run(dir, "bleu --ref " + (dir / "ref.txt").string() + " --cand " + (dir / "ref.txt").string() + " --order 2");
    CHECK(same.code == 0);
    CHECK(same.out.find("corpus_bleu=1\n") != std::string::npos);
    CHECK(same.out.find("mean_sentence_bleu=1\n") != std::string::npos);
    auto mismatch = run(dir, "bleu --ref " + (dir / "ref.txt").string() + " --cand " + (dir / "cand.txt").string());
    CHECK(mismatch.code == 3);
    CHECK(std::count(mismatch.err.begin(), mismatch.err.end(), '\n') == 1);

    // the reference "a b c d" against "a b c d e" scores exp(-1/4) * 4/5 at order 1
    write(dir / "r1.txt", "a b c d\n");
    write(dir / "c1.txt", "a b c d e\n");
    auto known = run(dir, "bleu --ref " + (dir / "r1.txt").string() + " --cand " + (dir / "c1.txt").string());
    char buf[64];
    std::snprintf(buf, sizeof buf, "corpus_bleu=%.12g\n", std::exp(-0.25) * 0.8);
    CHECK(known.out.find(buf) != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli train, eval and sweep") {
    const auto dir = workdir("pipeline");
    write_corpora(dir);
    write(dir / "exp.ini", small_ini());
    const auto cfg_arg = "--config " + (dir / "exp.ini").string();

    SUBCASE("unknown key is rejected before any work") {
        write(dir / "bad.ini", small_ini("[train]\nepoch = 3\n"));
        auto r = run(dir, "train --config " + (dir / "bad.ini").string());
        CHECK(r.code == 2);
        CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
        CHECK_FALSE(fs::exists(dir / "out"));
    }
    SUBCASE("missing corpus is an i/o error") {
        fs::remove(dir / "test.txt");
        CHECK(run(dir, "train " + cfg_arg).code == 3);
    }
    SUBCASE("missing checkpoint names the variant") {
        auto r = run(dir, "sweep " + cfg_arg);
        CHECK(r.code == 3);
        CHECK(r.err.find("RIS") != std::string::npos);
    }
    SUBCASE("full pipeline") {
        REQUIRE(run(dir, "train " + cfg_arg).code == 0);
        const auto ckpt = dir / "out" / "RIS_seed1.ckpt";
        REQUIRE(fs::exists(ckpt));
        CHECK(fs::exists(dir / "out" / "UPPER_BOUND_seed2.ckpt"));
        CHECK(slurp(dir / "out" / "RIS_seed1.log").rfind("1,", 0) == 0);
        const auto first = slurp(ckpt);

        // same config and seed: identical bytes
        REQUIRE(run(dir, "train " + cfg_arg + " --variant RIS --seed 1 --out " + (dir / "again.ckpt").string()).code == 0);
        CHECK(slurp(dir / "again.ckpt") == first);
        CHECK(model::Transceiver::load(ckpt).params().all().size() > 0);

        auto s1 = run(dir, "sweep " + cfg_arg);
        REQUIRE(s1.code == 0);
        const auto csv = dir / "out" / "results.csv";
        const auto rows = harness::read_results(csv);
        CHECK(rows.complete);
        CHECK(rows.rows.size() == 3 * 2 * 1 * 2);
        const auto bytes = slurp(csv);
        REQUIRE(run(dir, "sweep " + cfg_arg).code == 0);
        CHECK(slurp(csv) == bytes);

        // printed summary means against the CSV columns
        for (const auto& s : harness::summarize(rows.rows)) {
            double b1 = 0.0;
            int n = 0;
            for (const auto& r : rows.rows)
                if (r.variant == s.variant && r.snr_db == s.snr_db) {
                    b1 += r.bleu1;
                    ++n;
                }
            char line[64];
            std::snprintf(line, sizeof line, "%10.6f", b1 / n);
            CHECK(s1.out.find(line) != std::string::npos);
        }

        auto e = run(dir, "eval " + cfg_arg + " --variant POINT_TO_POINT --seed 2 --snr 6");
        CHECK(e.code == 0);
        std::string expected_row;
        for (const auto& r : rows.rows)
            if (r.variant == harness::Variant::PointToPoint && r.seed == 2 && r.snr_db == 6) expected_row = harness::format_row(r);
        CHECK(e.out.find(expected_row) != std::string::npos);

        // vocabulary mismatch between checkpoint and corpus
        std::string more;
        for (const auto& s : corpus::synthetic_sentences(400, 3)) more += s + "\n";
        write(dir / "train.txt", more);
        CHECK(run(dir, "eval " + cfg_arg + " --variant RIS --seed 1").code == 2);
    }
    fs::remove_all(dir);
}
