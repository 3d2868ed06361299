#include "vocabtrim/calibration.hpp"
#include "vocabtrim/lm.hpp"
#include "vocabtrim/rng.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace vocabtrim;

namespace {

// deterministic model that always argmaxes a fixed token
class ConstantModel final : public LanguageModel {
public:
    ConstantModel(std::int32_t v, TokenId top) : v_(v), top_(top) {}

    std::vector<double> next_logits(std::span<const TokenId> context) const override {
        detail::check_context_ids(context, v_);
        std::vector<double> logits(static_cast<std::size_t>(v_), 0.0);
        logits[static_cast<std::size_t>(top_)] = 1.0;
        return logits;
    }

    std::int64_t param_count() const override { return v_; }
    std::int32_t vocab_size() const override { return v_; }

private:
    std::int32_t v_;
    TokenId top_;
};

} // namespace

TEST_CASE("raw calibration tokenizes file lines") {
    test_util::TempDir dir("calib_raw");
    test_util::write_file(dir.file("raw.txt"), "a b a");
    const Vocabulary vocab({"a", "b"}); // a:0 b:1 unk:2 eos:3
    const ConstantModel target(vocab.size(), 0);
    const ConstantModel draft(vocab.size(), 1);

    const auto streams = produce_calibration_streams(RawSource{{dir.file("raw.txt")}}, target, draft, vocab);
    REQUIRE(streams.size() == 1);
    CHECK(streams[0] == std::vector<TokenId>{0, 1, 0, vocab.eos_id()});
}

TEST_CASE("raw calibration errors on missing or empty files") {
    test_util::TempDir dir("calib_raw_err");
    const Vocabulary vocab({"a"});
    const ConstantModel model(vocab.size(), 0);
    CHECK_THROWS_AS(produce_calibration_streams(RawSource{{dir.file("nope.txt")}}, model, model, vocab),
                    file_not_found_error);
    test_util::write_file(dir.file("empty.txt"), "\n  \n");
    CHECK_THROWS_AS(produce_calibration_streams(RawSource{{dir.file("empty.txt")}}, model, model, vocab),
                    empty_corpus_error);
}

TEST_CASE("a model that immediately emits EOS yields [eos] streams") {
    test_util::TempDir dir("calib_eos");
    test_util::write_file(dir.file("prompts.txt"), "a b\nb a\n");
    const Vocabulary vocab({"a", "b"});
    const ConstantModel target(vocab.size(), vocab.eos_id());
    const ConstantModel draft(vocab.size(), 0);

    const auto streams = produce_calibration_streams(
        TargetGeneratedSource{{dir.file("prompts.txt")}, 16}, target, draft, vocab);
    REQUIRE(streams.size() == 2);
    for (const auto & s : streams) {
        CHECK(s == std::vector<TokenId>{vocab.eos_id()});
    }
}

TEST_CASE("generated streams exclude prompts unless count_prompts is set") {
    test_util::TempDir dir("calib_prompts");
    test_util::write_file(dir.file("prompts.txt"), "b b b\n");
    const Vocabulary vocab({"a", "b"}); // a:0 b:1
    const ConstantModel target(vocab.size(), 0);
    const ConstantModel draft(vocab.size(), 0);

    const auto bare = produce_calibration_streams(
        TargetGeneratedSource{{dir.file("prompts.txt")}, 3}, target, draft, vocab);
    REQUIRE(bare.size() == 1);
    CHECK(bare[0] == std::vector<TokenId>{0, 0, 0}); // completions only, never hits EOS

    CalibrationOptions with_prompts{.count_prompts = true};
    const auto full = produce_calibration_streams(
        TargetGeneratedSource{{dir.file("prompts.txt")}, 3}, target, draft, vocab, with_prompts);
    REQUIRE(full.size() == 1);
    CHECK(full[0] == std::vector<TokenId>{1, 1, 1, 0, 0, 0});
}

TEST_CASE("draft-generated calibration runs the draft model") {
    test_util::TempDir dir("calib_draft");
    test_util::write_file(dir.file("prompts.txt"), "a\n");
    const Vocabulary vocab({"a", "b"});
    const ConstantModel target(vocab.size(), 0);
    const ConstantModel draft(vocab.size(), 1);

    const auto streams = produce_calibration_streams(
        DraftGeneratedSource{{dir.file("prompts.txt")}, 2}, target, draft, vocab);
    REQUIRE(streams.size() == 1);
    CHECK(streams[0] == std::vector<TokenId>{1, 1});
}

TEST_CASE("generated streams match a step-by-step decode oracle") {
    test_util::TempDir dir("calib_oracle");
    CounterRng rng(808);
    const Vocabulary vocab({"a", "b", "c", "d"});
    std::string prompts;
    for (int i = 0; i < 20; ++i) {
        prompts += (i % 2 == 0 ? "a b" : "c d a");
        prompts += "\n";
    }
    test_util::write_file(dir.file("prompts.txt"), prompts);

    std::vector<std::vector<TokenId>> train;
    for (int s = 0; s < 4; ++s) {
        std::vector<TokenId> stream;
        for (int i = 0; i < 50; ++i) {
            stream.push_back(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab.size()))));
        }
        train.push_back(std::move(stream));
    }
    const auto target = train_ngram(train, 2, 0.5, vocab.size());
    const ConstantModel draft(vocab.size(), 0);

    const std::int64_t max_new = 12;
    const auto streams = produce_calibration_streams(
        TargetGeneratedSource{{dir.file("prompts.txt")}, max_new}, target, draft, vocab);
    REQUIRE(streams.size() == 20);

    for (std::size_t i = 0; i < streams.size(); ++i) {
        auto ctx = tokenize(i % 2 == 0 ? "a b" : "c d a", vocab);
        ctx.pop_back();
        std::vector<TokenId> expect;
        while (static_cast<std::int64_t>(expect.size()) < max_new) {
            const auto logits = target.next_logits(ctx);
            TokenId best = 0;
            for (TokenId t = 1; t < vocab.size(); ++t) {
                if (logits[static_cast<std::size_t>(t)] > logits[static_cast<std::size_t>(best)]) {
                    best = t;
                }
            }
            expect.push_back(best);
            ctx.push_back(best);
            if (best == vocab.eos_id()) {
                break;
            }
        }
        CHECK(streams[i] == expect);
    }
}

TEST_CASE("generated calibration errors on empty prompt sets") {
    test_util::TempDir dir("calib_empty");
    test_util::write_file(dir.file("prompts.txt"), "\n\n");
    const Vocabulary vocab({"a"});
    const ConstantModel model(vocab.size(), 0);
    CHECK_THROWS_AS(produce_calibration_streams(TargetGeneratedSource{{dir.file("prompts.txt")}, 4},
                                                model, model, vocab),
                    empty_prompt_set_error);
    CHECK_THROWS_AS(produce_calibration_streams(DraftGeneratedSource{{dir.file("nope.txt")}, 4},
                                                model, model, vocab),
                    file_not_found_error);
}
