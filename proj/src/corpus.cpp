#include "rissc/corpus.hpp"

#include <array>
#include <random>
#include <string_view>

namespace rissc::corpus {

namespace {

constexpr std::array kNouns = {
    "commission", "council", "parliament", "report", "proposal", "directive", "regulation", "member",
    "state", "citizen", "budget", "policy", "committee", "amendment", "debate", "vote",
    "agreement", "treaty", "market", "sector", "region", "country", "government", "president",
    "minister", "rapporteur", "group", "question", "issue", "problem", "situation", "development",
    "programme", "framework", "strategy", "resolution", "measure", "right", "law", "system",
    "union", "energy", "environment", "health", "safety", "transport", "agriculture", "fishery",
    "trade", "employment", "education", "research", "innovation", "security", "rule", "procedure",
    "principle", "position", "decision", "initiative", "action", "conference", "crisis", "reform",
    "investment", "fund", "aid", "support", "cooperation", "dialogue", "process", "period",
    "industry", "company", "worker", "consumer", "product", "service", "water", "climate",
};

constexpr std::array kPlural = {
    "citizens", "members", "states", "countries", "regions", "workers", "consumers", "companies",
    "farmers", "women", "children", "refugees", "people", "institutions", "governments", "producers",
};

constexpr std::array kAdjectives = {
    "important", "new", "european", "common", "economic", "social", "political", "public",
    "national", "serious", "clear", "necessary", "difficult", "good", "strong", "small",
    "large", "fair", "open", "young", "financial", "internal", "external", "legal",
    "human", "environmental", "democratic", "sustainable", "local", "global", "first", "final",
};

struct Verb {
    const char* base;
    const char* third;
    const char* participle;
};

constexpr std::array kVerbs = {
    Verb{"support", "supports", "supported"},   Verb{"reject", "rejects", "rejected"},
    Verb{"adopt", "adopts", "adopted"},         Verb{"welcome", "welcomes", "welcomed"},
    Verb{"discuss", "discusses", "discussed"},  Verb{"approve", "approves", "approved"},
    Verb{"propose", "proposes", "proposed"},    Verb{"improve", "improves", "improved"},
    Verb{"protect", "protects", "protected"},   Verb{"strengthen", "strengthens", "strengthened"},
    Verb{"consider", "considers", "considered"}, Verb{"present", "presents", "presented"},
    Verb{"examine", "examines", "examined"},    Verb{"change", "changes", "changed"},
    Verb{"defend", "defends", "defended"},      Verb{"finance", "finances", "financed"},
    Verb{"review", "reviews", "reviewed"},      Verb{"accept", "accepts", "accepted"},
    Verb{"develop", "develops", "developed"},   Verb{"respect", "respects", "respected"},
    Verb{"implement", "implements", "implemented"}, Verb{"reduce", "reduces", "reduced"},
    Verb{"ensure", "ensures", "ensured"},       Verb{"address", "addresses", "addressed"},
};

constexpr std::array kModals = {"must", "should", "can", "will", "cannot", "would"};

constexpr std::array kPlaces = {
    "europe", "the union", "the member states", "the regions", "africa", "the world", "our countries", "the east",
};

constexpr std::array kPronouns = {"we", "they", "you", "i"};

class Builder {
public:
    explicit Builder(std::uint64_t seed) : rng_(seed) {}

    template <typename A>
    std::string_view pick(const A& a) {
        return a[std::uniform_int_distribution<std::size_t>(0, a.size() - 1)(rng_)];
    }
    bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }
    std::size_t choice(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

    const Verb& verb() { return kVerbs[choice(kVerbs.size())]; }

    std::string noun_phrase() {
        std::string s = coin(0.7) ? "the " : "this ";
        if (coin(0.4)) (s += pick(kAdjectives)) += ' ';
        s += pick(kNouns);
        return s;
    }

    std::string sentence() {
        std::string s;
        switch (choice(12)) {
        case 0:
            s = noun_phrase() + " " + verb().third + " " + noun_phrase();
            break;
        case 1:
            s = std::string("we ") + verb().base + " the " + std::string(pick(kAdjectives)) + " " +
                std::string(pick(kNouns)) + " of the " + std::string(pick(kNouns));
            break;
        case 2:
            s = noun_phrase() + " " + std::string(pick(kModals)) + " " + verb().base + " " + noun_phrase() + " in " +
                std::string(pick(kPlaces));
            break;
        case 3:
            s = std::string("i would like to ") + verb().base + " the " + std::string(pick(kNouns)) + " of the " +
                std::string(pick(kNouns));
            break;
        case 4:
            s = std::string(pick(kPronouns)) + " " + std::string(pick(kModals)) + " not " + verb().base + " " +
                noun_phrase();
            break;
        case 5:
            s = std::string("this is a ") + std::string(pick(kAdjectives)) + " " + std::string(pick(kNouns)) +
                " for the " + std::string(pick(kPlural)) + " of " + std::string(pick(kPlaces));
            break;
        case 6:
            s = std::string("mr president , ") + noun_phrase() + " " + verb().third + " " + noun_phrase();
            break;
        case 7:
            s = noun_phrase() + " has " + verb().participle + " " + noun_phrase() + " and " + noun_phrase();
            break;
        case 8:
            s = std::string("we must ") + verb().base + " " + noun_phrase() + " , because " + noun_phrase() + " is " +
                std::string(pick(kAdjectives));
            break;
        case 9:
            s = std::string("there is a ") + std::string(pick(kAdjectives)) + " " + std::string(pick(kNouns)) +
                " in " + std::string(pick(kPlaces));
            break;
        case 10:
            s = std::string("why does ") + noun_phrase() + " not " + verb().base + " " + noun_phrase() + " ?";
            return s;
        default:
            s = std::string("the ") + std::string(pick(kPlural)) + " of " + std::string(pick(kPlaces)) + " " +
                std::string(pick(kModals)) + " " + verb().base + " " + noun_phrase();
            break;
        }
        return s + " .";
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace

std::vector<std::string> synthetic_sentences(std::size_t n, std::uint64_t seed) {
    Builder b(seed);
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(b.sentence());
    return out;
}

}  // namespace rissc::corpus
