// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit status
// when any criterion fails. Seeds, budgets and tolerances are fixed below.

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bleu_oracle.hpp"
#include "gtr/attention.hpp"
#include "gtr/decoding.hpp"
#include "gtr/diagnostics.hpp"
#include "gtr/layers.hpp"
#include "gtr/metrics.hpp"
#include "gtr/training.hpp"
#include "test_util.hpp"

namespace gtr::acceptance {
namespace {

using Mat = Eigen::MatrixXd;
using Clock = std::chrono::steady_clock;

// criterion 1
constexpr int kMaskPairs = 1000;
constexpr double kMaskSeconds = 1.0;
// criterion 2
constexpr int kBlockCases = 100;
constexpr double kBlockTol = 1e-5;
constexpr double kBlockSeconds = 10.0;
// criterion 3
constexpr double kGradTol = 1e-3;
constexpr double kGradSeconds = 120.0;
// criterion 4
constexpr double kReductionTol = 1e-5;
// criterion 6
constexpr int kTagDocuments = 10000;
// criteria 7 and 8
constexpr int kStepBudget = 1200;
constexpr double kTargetAccuracy = 0.95;
constexpr double kAccuracyGap = 0.10;
constexpr int kEntropyAfterStep = 100;  // end of warmup
constexpr double kEntropyBand = 0.2;    // bits
constexpr int kPlateauWindow = 2;       // validation checkpoints, 50 steps apart
constexpr double kPlateauTol = 0.1;     // nats of best-so-far improvement per window
constexpr int kAblationSteps = 600;
constexpr double kContrastSeconds = 1800.0;
// criterion 9
constexpr int kBleuCorpora = 20;
constexpr double kBleuTol = 1e-6;
// criterion 10
constexpr int kDecodeInputs = 50;

struct Outcome {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void report(int n, const std::string& title, const Outcome& o, double seconds) {
    std::printf("CRITERION %2d %s  %-28s %s [%.1fs]\n", n, o.pass ? "PASS" : "FAIL", title.c_str(), o.detail.c_str(),
                seconds);
    std::fflush(stdout);
    failures += !o.pass;
}

template <typename Fn>
void run(int n, const std::string& title, Fn fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    report(n, title, o, std::chrono::duration<double>(Clock::now() - t0).count());
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

GroupTagSeq random_tags(std::mt19937_64& rng, int max_sentences, int max_len, int max_pad) {
    std::uniform_int_distribution<int> ns(1, max_sentences), nl(1, max_len), np(0, max_pad);
    std::vector<int> lengths(static_cast<std::size_t>(ns(rng)));
    for (auto& l : lengths) l = nl(rng);
    return testing::tags_from_lengths(lengths, np(rng));
}

// ------------------------------------------------------------------ 1

Outcome mask_oracle() {
    std::mt19937_64 rng(101);
    const double gamma = kDefaultGamma;
    const auto t0 = Clock::now();
    int mismatches = 0;
    for (int pair = 0; pair < kMaskPairs; ++pair) {
        const auto gq = random_tags(rng, 6, 7, 3);
        const auto gk = random_tags(rng, 6, 7, 3);
        const Mat m = group_mask<double>(gq, gk, gamma);
        for (std::size_t i = 0; i < gq.size(); ++i) {
            for (std::size_t j = 0; j < gk.size(); ++j) {
                // min(1, |g_q - g_k|) * gamma, with any padding participant masked
                double expected = std::min(1.0, std::abs(static_cast<double>(gq[i]) - static_cast<double>(gk[j]))) * gamma;
                if (gq[i] == 0 || gk[j] == 0) expected = gamma;
                mismatches += m(static_cast<Index>(i), static_cast<Index>(j)) != expected;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < kMaskSeconds,
            fmt("%d pairs, %d mismatching entries, %.3fs", kMaskPairs, mismatches, secs)};
}

// ------------------------------------------------------------------ 2

Outcome block_equivalence() {
    std::mt19937_64 rng(102);
    const auto t0 = Clock::now();
    double worst = 0.0;
    const std::array<int, 3> head_counts{1, 2, 4};
    for (int c = 0; c < kBlockCases; ++c) {
        const int h = head_counts[static_cast<std::size_t>(c % 3)];
        const Index d = 8;
        HeadProjections<double> heads;
        heads.n_heads = h;
        heads.w_q = testing::random_matrix(d, d, rng, 0.5);
        heads.w_k = testing::random_matrix(d, d, rng, 0.5);
        heads.w_v = testing::random_matrix(d, d, rng, 0.5);
        heads.w_o = testing::random_matrix(d, d, rng, 0.5);
        const auto g = random_tags(rng, 4, 8, 0);
        const auto n = static_cast<Index>(g.size());
        const Mat x = testing::random_matrix(n, d, rng);
        const Mat out = group_mha<double>({x, x, x, g, g}, heads).output;
        Index start = 0;
        while (start < n) {
            Index end = start;
            while (end < n && g[static_cast<std::size_t>(end)] == g[static_cast<std::size_t>(start)]) ++end;
            const Mat block = x.middleRows(start, end - start);
            const Mat ref = multi_head(block, block, block, Mat::Zero(end - start, end - start), heads).output;
            worst = std::max(worst, (out.middleRows(start, end - start) - ref).cwiseAbs().maxCoeff());
            start = end;
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= kBlockTol && secs < kBlockSeconds, fmt("%d cases, max |diff| %.2e, %.2fs", kBlockCases, worst, secs)};
}

// ------------------------------------------------------------------ 3

Outcome gradient_checks() {
    using testing::random_projection;
    std::mt19937_64 rng(103);
    const auto t0 = Clock::now();
    const Mat a = testing::random_matrix(3, 4, rng), b = testing::random_matrix(4, 2, rng);
    const Mat c = testing::random_matrix(3, 4, rng), row = testing::random_matrix(1, 4, rng);
    // keep relu inputs away from the kink
    Mat off_kink = a;
    for (Index i = 0; i < off_kink.size(); ++i) off_kink.data()[i] += off_kink.data()[i] >= 0 ? 0.1 : -0.1;
    Mat mask = Mat::Zero(3, 4);
    mask(0, 1) = kDefaultGamma;
    mask.row(2).setConstant(kDefaultGamma);
    Mat keep = Mat::Constant(3, 4, 1.0 / 0.75);
    keep(0, 0) = keep(1, 3) = keep(2, 2) = 0.0;
    const Mat offset = testing::random_matrix(3, 4, rng);
    const std::vector<TokenId> ids{3, 0, 2, 2};
    const std::vector<TokenId> targets{1, 0, 3};

    using Fn = testing::ScalarFn;
    struct Case {
        const char* name;
        Fn fn;
        std::vector<Mat> inputs;
    };
    const std::vector<Case> cases{
        {"matmul", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::matmul(v[0], v[1]), 1); }, {a, b}},
        {"matmul_nt", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::matmul_nt(v[0], v[1]), 2); }, {a, c}},
        {"add", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::add(v[0], v[1]), 3); }, {a, c}},
        {"sub", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::sub(v[0], v[1]), 4); }, {a, c}},
        {"add_row", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::add_row(v[0], v[1]), 5); }, {a, row}},
        {"add_constant",
         [&](Tape&, const std::vector<Var>& v) { return random_projection(ag::add_constant(v[0], offset), 6); }, {a}},
        {"hadamard", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::hadamard(v[0], v[1]), 7); }, {a, c}},
        {"scale", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::scale(v[0], -0.7), 8); }, {a}},
        {"one_minus", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::one_minus(v[0]), 9); }, {a}},
        {"relu", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::relu(v[0]), 10); }, {off_kink}},
        {"sigmoid", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::sigmoid(v[0]), 11); }, {a}},
        {"concat_cols",
         [](Tape&, const std::vector<Var>& v) {
             const std::array<Var, 2> parts{v[0], v[1]};
             return random_projection(ag::concat_cols(parts), 12);
         },
         {a, c}},
        {"slice_cols", [](Tape&, const std::vector<Var>& v) { return random_projection(ag::slice_cols(v[0], 1, 2), 13); }, {a}},
        {"sum", [](Tape&, const std::vector<Var>& v) { return ag::sum(ag::hadamard(v[0], v[0])); }, {a}},
        {"masked_softmax",
         [&](Tape&, const std::vector<Var>& v) { return random_projection(ag::masked_softmax(v[0], mask), 14); }, {a}},
        {"layer_norm",
         [](Tape&, const std::vector<Var>& v) { return random_projection(ag::layer_norm(v[0], v[1], v[2]), 15); },
         {a, row, testing::random_matrix(1, 4, rng)}},
        {"embedding", [&](Tape&, const std::vector<Var>& v) { return random_projection(ag::embedding(v[0], ids), 16); },
         {testing::random_matrix(5, 3, rng)}},
        {"apply_dropout",
         [&](Tape&, const std::vector<Var>& v) { return random_projection(ag::apply_dropout(v[0], keep), 17); }, {a}},
        {"label_smoothed_nll",
         [&](Tape&, const std::vector<Var>& v) { return ag::label_smoothed_nll(v[0], targets, 0.1, kSpecial.pad); },
         {a}},
        {"feed_forward",
         [](Tape&, const std::vector<Var>& v) { return random_projection(feed_forward(v[0], v[1], v[2], v[3], v[4]), 18); },
         {a, testing::random_matrix(4, 6, rng), testing::random_matrix(1, 6, rng), testing::random_matrix(6, 4, rng),
          testing::random_matrix(1, 4, rng)}},
    };
    double worst = 0.0;
    std::string worst_name;
    for (const auto& cs : cases) {
        const double e = testing::max_of(testing::gradient_check(cs.fn, cs.inputs));
        if (e > worst) {
            worst = e;
            worst_name = cs.name;
        }
    }

    // full two-layer model, every parameter tensor
    ModelConfig mc;
    mc.vocab_size = 8;
    mc.n_layers = 2;
    mc.n_heads = 2;
    mc.d_model = 4;
    mc.d_ff = 6;
    mc.k_combined = 1;
    mc.dropout = 0.0;
    mc.label_smoothing = 0.1;
    Transformer model(mc, 19);
    const auto src = testing::random_document(rng, 2, 2, 1, 8);
    const auto tgt = testing::random_document(rng, 2, 2, 0, 8);
    const auto ex = make_teacher_forced(src, tgt);
    auto loss = [&](bool record) {
        Tape tape(record);
        ForwardContext ctx;
        const Var enc = model.encode(tape, ex.src, ex.g_x, ctx);
        const Var logits = model.decode(tape, enc, ex.g_x, ex.tgt_in, ex.g_y, ctx);
        const Var l = ag::label_smoothed_nll(logits, ex.tgt_out, mc.label_smoothing, kSpecial.pad);
        if (record) tape.backward(l);
        return l.value()(0, 0);
    };
    model.params().zero_grad();
    (void)loss(true);
    double model_worst = 0.0;
    std::string model_worst_name;
    int tensors = 0;
    for (auto& p : model.params()) {
        ++tensors;
        Mat numeric(p.value.rows(), p.value.cols());
        for (Index i = 0; i < p.value.size(); ++i) {
            const double orig = p.value.data()[i];
            p.value.data()[i] = orig + 1e-4;
            const double up = loss(false);
            p.value.data()[i] = orig - 1e-4;
            const double down = loss(false);
            p.value.data()[i] = orig;
            numeric.data()[i] = (up - down) / 2e-4;
        }
        const double denom = p.grad.norm() + numeric.norm();
        // tensors with no influence on the loss must have (near) zero gradient
        const double e = denom < 1e-9 ? ((p.grad - numeric).cwiseAbs().maxCoeff() < 1e-9 ? 0.0 : 1.0)
                                      : (p.grad - numeric).norm() / denom;
        if (e > model_worst) {
            model_worst = e;
            model_worst_name = p.name;
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= kGradTol && model_worst <= kGradTol && secs < kGradSeconds,
            fmt("%zu ops worst %.1e (%s); model %d tensors worst %.1e (%s)", cases.size(), worst, worst_name.c_str(),
                tensors, model_worst, model_worst_name.c_str())};
}

// ------------------------------------------------------------------ 4

Mat logits_of(const Transformer& m, const TokenDocument& src, const TokenDocument& tgt) {
    const auto ex = make_teacher_forced(src, tgt);
    Tape tape(false);
    ForwardContext ctx;
    const Var enc = m.encode(tape, ex.src, ex.g_x, ctx);
    return m.decode(tape, enc, ex.g_x, ex.tgt_in, ex.g_y, ctx).value();
}

Outcome reduction() {
    std::mt19937_64 rng(104);
    ModelConfig gc;
    gc.vocab_size = 20;
    gc.n_layers = 2;
    gc.n_heads = 4;
    gc.d_model = 16;
    gc.d_ff = 32;
    gc.k_combined = 2;
    gc.dropout = 0.0;
    Transformer g(gc, 5);
    for (auto& p : g.params()) {
        // gate = sigmoid(1e4) = 1 selects the local branch everywhere
        if (p.name.ends_with("_gate.w")) p.value.setZero();
        if (p.name.ends_with("_gate.b")) p.value.setConstant(1e4);
    }
    ModelConfig bc = gc;
    bc.variant = Variant::baseline;
    ParamStore bp;
    const Transformer shape(bc, 0);
    for (const auto& p : shape.params()) bp.add(p.name, g.params().at(p.name).value);
    const Transformer b(bc, bp);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto src = testing::random_document(rng, 1, 10, 0, 20);
        const auto tgt = testing::random_document(rng, 1, 10, 0, 20);
        worst = std::max(worst, (logits_of(g, src, tgt) - logits_of(b, src, tgt)).cwiseAbs().maxCoeff());
    }
    return {worst <= kReductionTol, fmt("20 single-sentence documents, max |diff| %.2e", worst)};
}

// ------------------------------------------------------------------ 5

Outcome sparsity() {
    std::string detail;
    bool pass = true;
    for (const int n : {64, 128}) {
        for (const int m : {1, 2, 4, 8}) {
            const auto tags = testing::tags_from_lengths(std::vector<int>(static_cast<std::size_t>(m), n / m));
            const std::int64_t count = unmasked_entry_count(tags, tags);
            const std::int64_t expected = static_cast<std::int64_t>(n) * n / m;
            pass = pass && count == expected;
            if (count != expected) detail += fmt("N=%d M=%d got %lld; ", n, m, static_cast<long long>(count));
        }
    }
    return {pass, pass ? "N in {64,128}, M in {1,2,4,8}: count = N^2/M" : detail};
}

// ------------------------------------------------------------------ 6

Outcome tags() {
    std::mt19937_64 rng(106);
    std::uniform_int_distribution<int> sentences(1, 12), len(0, 15);
    int mismatches = 0;
    for (int d = 0; d < kTagDocuments; ++d) {
        const auto doc = testing::random_document(rng, sentences(rng), len(rng), 0, 50);
        mismatches += incremental_tags(doc.tokens) != build_group_tags(doc);
    }
    return {mismatches == 0, fmt("%d documents, %d mismatches", kTagDocuments, mismatches)};
}

// ------------------------------------------------------------------ 7 and 8

Corpus coreference_corpus() {
    SyntheticTaskSpec spec;
    spec.task = Task::coreference;
    spec.vocab_size = 40;
    spec.sentences = {8, 8};
    spec.tokens = {4, 8};
    spec.n_train = 2000;
    spec.n_dev = 100;
    spec.n_test = 200;
    spec.seed = 1;
    return generate(spec);
}

ModelConfig toy_model(Variant v) {
    ModelConfig mc;
    mc.vocab_size = 40;
    mc.n_layers = 2;
    mc.n_heads = 4;
    mc.d_model = 64;
    mc.d_ff = 128;
    mc.k_combined = 1;
    mc.variant = v;
    mc.dropout = 0.1;
    mc.word_dropout = 0.0;
    return mc;
}

TrainConfig toy_training(int steps, int every) {
    TrainConfig tc;
    tc.learning_rate = 3e-3;
    tc.warmup_steps = 100;
    tc.max_steps = steps;
    tc.batch_tokens = 1000;
    tc.eval_every = every;
    tc.entropy_every = every;
    tc.entropy_docs = 8;
    tc.patience = 1000;
    tc.seed = 1;
    return tc;
}

struct ToyRun {
    Transformer model;
    TrainResult result;
    double seconds = 0.0;
};

ToyRun train_toy(const Corpus& corpus, const ModelConfig& mc, int steps, int every) {
    const auto t0 = Clock::now();
    Transformer model(mc, 7);
    const Regime regime = mc.variant == Variant::baseline ? Regime::random_init_baseline : Regime::random_init_gtrans;
    TrainResult r = train(model, corpus, regime, toy_training(steps, every));
    return {std::move(model), std::move(r), seconds_since(t0)};
}

double value_at(const std::vector<std::pair<int, double>>& series, int step) {
    for (const auto& [s, v] : series) {
        if (s == step) return v;
    }
    throw std::runtime_error("no record at step " + std::to_string(step));
}

struct ContrastState {
    Corpus corpus;
    std::optional<ToyRun> gtrans;
    std::optional<ToyRun> baseline;
};

Outcome convergence_contrast(ContrastState& st) {
    const auto t0 = Clock::now();
    st.gtrans.emplace(train_toy(st.corpus, toy_model(Variant::gtransformer), kStepBudget, 50));
    st.baseline.emplace(train_toy(st.corpus, toy_model(Variant::baseline), kStepBudget, 50));

    const auto g_acc = st.gtrans->result.log.series("valid", "accuracy");
    const auto b_acc = st.baseline->result.log.series("valid", "accuracy");
    int reach = -1;
    for (const auto& [s, v] : g_acc) {
        if (v >= kTargetAccuracy) {
            reach = s;
            break;
        }
    }
    const bool reached = reach > 0 && reach <= kStepBudget;
    const double g_at = reached ? value_at(g_acc, reach) : g_acc.back().second;
    const double b_at = reached ? value_at(b_acc, reach) : b_acc.back().second;
    const bool gap = reached && b_at <= g_at - kAccuracyGap;

    std::vector<double> entropy;
    for (const auto& [s, v] : st.gtrans->result.log.series("valid", "entropy/cross")) {
        if (s >= kEntropyAfterStep) entropy.push_back(v);
    }
    const bool monotone = !entropy.empty() && monotone_within(entropy, kEntropyBand);

    const auto b_loss = st.baseline->result.log.series("valid", "loss");
    std::vector<std::pair<int, double>> b_window;
    for (const auto& pt : b_loss) {
        if (pt.first <= (reached ? reach : kStepBudget)) b_window.push_back(pt);
    }
    const auto plateaus = detect_plateau(b_window, kPlateauWindow, kPlateauTol);
    const bool plateau = !plateaus.empty();

    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << fmt("G reaches %.3f at step %d (budget %d), baseline %.3f there; ", g_at, reach, kStepBudget, b_at)
      << fmt("G cross entropy %s within %.1f bits after step %d (%.2f -> %.2f); ", monotone ? "monotone" : "NOT monotone",
             kEntropyBand, kEntropyAfterStep, entropy.empty() ? 0.0 : entropy.front(),
             entropy.empty() ? 0.0 : entropy.back())
      << "baseline plateaus:";
    for (const auto& p : plateaus) d << ' ' << p.start_step << '-' << p.end_step;
    if (plateaus.empty()) d << " none";
    d << fmt("; G test acc %.3f, baseline test acc %.3f", evaluate(st.gtrans->model, st.corpus.test).accuracy,
             evaluate(st.baseline->model, st.corpus.test).accuracy);
    return {reached && gap && monotone && plateau && secs <= kContrastSeconds, d.str()};
}

Outcome context_ablation(ContrastState& st) {
    if (!st.gtrans) throw std::runtime_error("needs the full model run of criterion 7");
    auto no_source = toy_model(Variant::gtransformer);
    no_source.global_sites.encoder_self = false;
    no_source.global_sites.cross = false;
    auto no_target = toy_model(Variant::gtransformer);
    no_target.global_sites.decoder_self = false;
    const auto rs = train_toy(st.corpus, no_source, kAblationSteps, kAblationSteps / 2);
    const auto rt = train_toy(st.corpus, no_target, kAblationSteps, kAblationSteps / 2);

    const double full = value_at(st.gtrans->result.log.series("valid", "accuracy"), kAblationSteps);
    const double src = value_at(rs.result.log.series("valid", "accuracy"), kAblationSteps);
    const double tgt = value_at(rt.result.log.series("valid", "accuracy"), kAblationSteps);
    const double drop_src = full - src, drop_tgt = full - tgt;
    return {drop_src > drop_tgt,
            fmt("at step %d: full %.3f, no source-side global %.3f (drop %.3f), no target-side global %.3f (drop %.3f)",
                kAblationSteps, full, src, drop_src, tgt, drop_tgt)};
}

// ------------------------------------------------------------------ 9

TokenDocument document_of(const std::vector<std::vector<TokenId>>& sentences) {
    TokenDocument d;
    for (const auto& s : sentences) {
        d.tokens.push_back(kSpecial.bos);
        d.tokens.insert(d.tokens.end(), s.begin(), s.end());
        d.tokens.push_back(kSpecial.eos);
    }
    return d;
}

Outcome bleu() {
    std::mt19937_64 rng(109);
    std::uniform_int_distribution<int> n_docs(1, 5), n_sent(1, 4), n_tok(0, 9);
    std::uniform_int_distribution<TokenId> tok(4, 10);
    double worst = 0.0;
    bool identity = true, single = true;
    for (int corpus = 0; corpus < kBleuCorpora; ++corpus) {
        std::vector<TokenDocument> cands, refs, single_c, single_r;
        std::vector<std::vector<TokenId>> c_docs, r_docs, c_sents, r_sents;
        const int docs = n_docs(rng);
        for (int d = 0; d < docs; ++d) {
            std::vector<std::vector<TokenId>> cs, rs;
            for (int s = n_sent(rng); s > 0; --s) {
                std::vector<TokenId> x, y;
                for (int i = n_tok(rng); i > 0; --i) x.push_back(tok(rng));
                // references share part of the candidate so higher orders match
                for (int i = n_tok(rng); i > 0; --i) y.push_back(tok(rng));
                if (!x.empty() && s % 2 == 0) y.insert(y.begin(), x.begin(), x.begin() + static_cast<long>(x.size() / 2));
                cs.push_back(x);
                rs.push_back(y);
                single_c.push_back(document_of({x}));
                single_r.push_back(document_of({y}));
            }
            cands.push_back(document_of(cs));
            refs.push_back(document_of(rs));
            std::vector<TokenId> cf, rf;
            for (const auto& s : cs) cf.insert(cf.end(), s.begin(), s.end());
            for (const auto& s : rs) rf.insert(rf.end(), s.begin(), s.end());
            c_docs.push_back(cf);
            r_docs.push_back(rf);
            c_sents.insert(c_sents.end(), cs.begin(), cs.end());
            r_sents.insert(r_sents.end(), rs.begin(), rs.end());
        }
        worst = std::max(worst, std::abs(d_bleu(cands, refs).score - testing::oracle_bleu(c_docs, r_docs)));
        worst = std::max(worst, std::abs(s_bleu(cands, refs).score - testing::oracle_bleu(c_sents, r_sents)));
        identity = identity && d_bleu(cands, cands).score == 100.0;
        single = single && s_bleu(single_c, single_r).score == d_bleu(single_c, single_r).score;
    }
    return {worst <= kBleuTol && identity && single,
            fmt("%d corpora, max |diff| vs oracle %.1e; d_bleu(x,x)=100 %s; single-sentence s=d %s", kBleuCorpora, worst,
                identity ? "holds" : "FAILS", single ? "holds" : "FAILS")};
}

// ------------------------------------------------------------------ 10

Outcome decoding_contract(const ContrastState& st) {
    if (!st.gtrans) throw std::runtime_error("needs the trained model of criterion 7");
    const Transformer& model = st.gtrans->model;
    std::mt19937_64 rng(110);
    std::uniform_int_distribution<int> sentences(1, 4);
    int count_ok = 0, score_ok = 0;
    double worst_gap = 0.0;
    for (int i = 0; i < kDecodeInputs; ++i) {
        // source side of random coreference-style documents: plain words, one
        // antecedent per sentence and a pronoun after the first
        const CoreferenceLexicon lex;
        std::uniform_int_distribution<TokenId> word(lex.first_word(), 39);
        std::uniform_int_distribution<int> ante(0, CoreferenceLexicon::kAntecedents - 1), len(4, 8);
        TokenDocument src;
        const int n = sentences(rng);
        for (int s = 0; s < n; ++s) {
            std::vector<TokenId> toks(static_cast<std::size_t>(len(rng)));
            for (auto& t : toks) t = word(rng);
            toks[0] = lex.antecedent(ante(rng));
            if (s > 0) toks[1] = lex.pronoun();
            std::shuffle(toks.begin(), toks.end(), rng);
            src.tokens.push_back(kSpecial.bos);
            src.tokens.insert(src.tokens.end(), toks.begin(), toks.end());
            src.tokens.push_back(kSpecial.eos);
        }
        const auto b1 = beam_search_document(src, model, 1);
        const auto b5 = beam_search_document(src, model, 5);
        count_ok += sentence_count(b1.document) == sentence_count(src) && sentence_count(b5.document) == sentence_count(src);
        score_ok += b5.normalized_score >= b1.normalized_score;
        worst_gap = std::min(worst_gap, b5.normalized_score - b1.normalized_score);
    }
    return {count_ok == kDecodeInputs && score_ok == kDecodeInputs,
            fmt("%d inputs: sentence counts match %d, beam5 >= beam1 score %d (worst gap %.2e)", kDecodeInputs, count_ok,
                score_ok, worst_gap)};
}

}  // namespace
}  // namespace gtr::acceptance

int main() {
    using namespace gtr::acceptance;
    const auto t0 = Clock::now();
    run(1, "mask oracle", mask_oracle);
    run(2, "block equivalence", block_equivalence);
    run(3, "gradient checks", gradient_checks);
    run(4, "reduction to baseline", reduction);
    run(5, "sparsity N^2/M", sparsity);
    run(6, "tag correctness", tags);
    ContrastState st{coreference_corpus(), std::nullopt, std::nullopt};
    run(7, "convergence contrast", [&] { return convergence_contrast(st); });
    run(8, "context ablation order", [&] { return context_ablation(st); });
    run(9, "BLEU oracle", bleu);
    run(10, "decoding contract", [&] { return decoding_contract(st); });
    std::printf("%d of 10 criteria failed; total %.0fs\n", failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
