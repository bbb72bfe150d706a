#include "fctraj/contamination.hpp"

#include <unordered_set>

#include <nlohmann/json.hpp>

#include "fctraj/fsp_sampler.hpp"

namespace fctraj {

namespace {

// \x1f never appears in function names; joining is collision-free.
std::string joined(const token_sequence& seq, size_t begin, size_t count) {
    std::string out;
    for (size_t i = begin; i < begin + count; ++i) {
        out += seq[i];
        out.push_back('\x1f');
    }
    return out;
}

}  // namespace

double exact_match_rate(const std::vector<token_sequence>& train,
                        const std::vector<token_sequence>& test) {
    if (test.empty()) throw validation_error("exact_match_rate: empty test corpus");
    std::unordered_set<std::string> train_set;
    train_set.reserve(train.size());
    for (const auto& seq : train) train_set.insert(joined(seq, 0, seq.size()));
    size_t hits = 0;
    for (const auto& seq : test) {
        hits += train_set.count(joined(seq, 0, seq.size())) ? 1 : 0;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(test.size());
}

double ngram_overlap(const std::vector<token_sequence>& train,
                     const std::vector<token_sequence>& test, size_t n) {
    if (n == 0) throw validation_error("ngram_overlap: n must be >= 1");
    auto distinct_ngrams = [n](const std::vector<token_sequence>& corpus) {
        std::unordered_set<std::string> grams;
        for (const auto& seq : corpus) {
            if (seq.size() < n) continue;
            for (size_t i = 0; i + n <= seq.size(); ++i) grams.insert(joined(seq, i, n));
        }
        return grams;
    };
    std::unordered_set<std::string> test_grams = distinct_ngrams(test);
    if (test_grams.empty()) {
        throw validation_error("ngram_overlap: no test sequence of length >= " +
                               std::to_string(n));
    }
    std::unordered_set<std::string> train_grams = distinct_ngrams(train);
    size_t shared = 0;
    for (const auto& g : test_grams) shared += train_grams.count(g) ? 1 : 0;
    return 100.0 * static_cast<double>(shared) / static_cast<double>(test_grams.size());
}

contamination_report contamination_between(const std::vector<token_sequence>& train,
                                           const std::vector<token_sequence>& test, size_t n) {
    contamination_report r;
    r.exact_match_pct = exact_match_rate(train, test);
    r.ngram_pct = ngram_overlap(train, test, n);
    r.n = n;
    return r;
}

nlohmann::json report_to_json(const contamination_report& r) {
    return nlohmann::json{
        {"exact_match_pct", r.exact_match_pct}, {"ngram_pct", r.ngram_pct}, {"n", r.n}};
}

std::vector<token_sequence> load_token_sequences(const std::filesystem::path& fsp_jsonl) {
    std::vector<token_sequence> out;
    for (const fsp& path : load_fsps(fsp_jsonl)) out.push_back(path.flatten());
    return out;
}

}  // namespace fctraj
