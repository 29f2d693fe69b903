// Writes a seeded synthetic corpus, one sentence per line.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "rissc/corpus.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic parliamentary-style corpus"};
    std::size_t count = 10000;
    std::uint64_t seed = 1;
    std::string out;
    app.add_option("--count", count, "sentences");
    app.add_option("--seed", seed, "seed");
    app.add_option("--out", out, "output file")->required();
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "make_corpus: error: " << e.what() << '\n';
        return 2;
    }
    std::ofstream os(out, std::ios::trunc);
    if (!os) {
        std::cerr << "make_corpus: i/o error: cannot write " << out << '\n';
        return 3;
    }
    for (const auto& s : rissc::corpus::synthetic_sentences(count, seed)) os << s << '\n';
    return os ? 0 : 3;
}
