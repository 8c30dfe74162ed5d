#pragma once

// Encoder/decoder assembly for the document-level baseline Transformer and
// the group-tag variant (group attention on lower layers, gated
// local/global attention on the top k_combined layers).

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gtr/attention.hpp"
#include "gtr/autograd.hpp"
#include "gtr/config.hpp"
#include "gtr/params.hpp"
#include "gtr/tagging.hpp"
#include "gtr/trace.hpp"

namespace gtr {

enum class Variant { baseline, gtransformer };

[[nodiscard]] std::string_view to_string(Variant v);
[[nodiscard]] Variant parse_variant(std::string_view s);

/// Which attention sites get a global branch on combined layers. Turning a
/// site off leaves plain group attention there.
struct GlobalSites {
    bool encoder_self = true;
    bool decoder_self = true;
    bool cross = true;
};

struct ModelConfig {
    int vocab_size = 64;
    int n_layers = 6;
    int n_heads = 8;
    int d_model = 512;
    int d_ff = 2048;
    int k_combined = 2;
    double gamma = kDefaultGamma;
    Variant variant = Variant::gtransformer;
    double dropout = 0.3;
    double word_dropout = 0.3;
    double label_smoothing = 0.1;
    GlobalSites global_sites;

    void validate() const;

    /// Layer uses gated local/global attention.
    [[nodiscard]] bool combined_layer(int layer) const {
        return variant == Variant::gtransformer && layer >= n_layers - k_combined;
    }
    [[nodiscard]] bool has_global(int layer, AttentionSite site) const;

    static ModelConfig base();
    static ModelConfig big();
    static ModelConfig large();
};

[[nodiscard]] KeyValues to_key_values(const ModelConfig& c);
/// Sets a ModelConfig field by key; false when the key is not a model key.
bool set_model_field(ModelConfig& c, const std::string& key, const std::string& value);
[[nodiscard]] ModelConfig model_config_from(const KeyValues& kv);

/// Mode switches for a differentiable pass.
struct ForwardContext {
    bool training = false;
    std::mt19937_64* rng = nullptr;
    AttentionTrace* trace = nullptr;
};

class InferenceWeights;

class Transformer {
public:
    /// Freshly initialised parameters from `seed`.
    Transformer(const ModelConfig& config, std::uint64_t seed);
    /// Adopts existing parameters; throws ShapeError when names or shapes do
    /// not match the configuration.
    Transformer(const ModelConfig& config, ParamStore params);

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
    [[nodiscard]] const ParamStore& params() const noexcept { return params_; }
    [[nodiscard]] ParamStore& params() noexcept { return params_; }

    /// Encoder output [len x d_model] on a tape.
    [[nodiscard]] Var encode(Tape& tape, std::span<const TokenId> src, std::span<const GroupTag> g_x,
                             ForwardContext& ctx) const;
    /// Decoder logits [len x vocab] for every input position.
    [[nodiscard]] Var decode(Tape& tape, Var enc_out, std::span<const GroupTag> g_x, std::span<const TokenId> tgt_in,
                             std::span<const GroupTag> g_y, ForwardContext& ctx) const;

    /// Encoder output for a document; rejects empty documents.
    [[nodiscard]] Eigen::MatrixXd encode(const TokenDocument& src, std::span<const GroupTag> g_x) const;

    /// Next-token log-probabilities after `prefix`, recomputing the whole
    /// prefix. Requires g_prefix.size() == prefix.size().
    [[nodiscard]] Eigen::VectorXd decode_step(std::span<const TokenId> prefix, std::span<const GroupTag> g_prefix,
                                              const Eigen::MatrixXd& enc_out, std::span<const GroupTag> g_x) const;

    /// Immutable copy of the weights in the layout the incremental decoder uses.
    [[nodiscard]] std::shared_ptr<const InferenceWeights> snapshot() const;

    /// True for parameters of a global branch or gate, which sentence-level
    /// models do not have.
    [[nodiscard]] static bool is_global_branch(const std::string& param_name);

private:
    Var attention_site(Tape& tape, int layer, AttentionSite site, Var query, Var memory,
                       std::span<const GroupTag> g_q, std::span<const GroupTag> g_k, bool causal,
                       ForwardContext& ctx) const;
    Var embed(Tape& tape, std::span<const TokenId> tokens) const;
    void init_parameters(std::uint64_t seed);
    void check_parameters() const;

    ModelConfig config_;
    ParamStore params_;
};

/// Teacher-forcing view of a parallel document pair: decoder inputs are the
/// target without its last token, outputs the target without its first.
struct TeacherForcedExample {
    std::vector<TokenId> src;
    GroupTagSeq g_x;
    std::vector<TokenId> tgt_in;
    GroupTagSeq g_y;
    std::vector<TokenId> tgt_out;
};

[[nodiscard]] TeacherForcedExample make_teacher_forced(const TokenDocument& src, const TokenDocument& tgt);

/// Per-position log-probabilities of the gold next tokens (pad targets skipped).
[[nodiscard]] std::vector<double> gold_log_probs(const Transformer& model, const TokenDocument& src,
                                                 const TokenDocument& tgt);

/// Weights re-packed as HeadProjections / GateParams for plain evaluation.
class InferenceWeights {
public:
    struct Site {
        bool grouped = false;  // local attention uses the group mask
        HeadProjections<double> local;
        std::optional<HeadProjections<double>> global;
        std::optional<GateParams<double>> gate;
    };
    struct Norm {
        RowVector<double> gain;
        RowVector<double> bias;
    };
    struct FeedForward {
        Matrix<double> w1, w2;
        RowVector<double> b1, b2;
    };
    struct DecoderLayer {
        Site self_attn, cross;
        Norm ln1, ln2, ln3;
        FeedForward ffn;
    };

    ModelConfig config;
    Matrix<double> embedding;
    std::vector<DecoderLayer> decoder;
};

/// Decoder that feeds one token per step and caches per-position keys and
/// values. Copies share the immutable weights and encoder projections.
class IncrementalDecoder {
public:
    IncrementalDecoder(std::shared_ptr<const InferenceWeights> weights, const Eigen::MatrixXd& enc_out,
                       GroupTagSeq g_x);

    /// Appends `token` at the next position and returns log-probabilities
    /// for the token after it.
    Eigen::VectorXd step(TokenId token);

    [[nodiscard]] const std::vector<TokenId>& tokens() const noexcept { return tokens_; }
    [[nodiscard]] const GroupTagSeq& tags() const noexcept { return tags_; }

private:
    struct BranchCache {
        Matrix<double> k;
        Matrix<double> v;
    };
    struct SiteCache {
        BranchCache local;
        BranchCache global;
    };
    struct CrossCache {
        std::vector<SiteCache> layers;
    };

    Matrix<double> site_step(const InferenceWeights::Site& site, const Matrix<double>& query, const SiteCache& cache,
                             std::span<const GroupTag> g_k, GroupTag g_q) const;

    std::shared_ptr<const InferenceWeights> weights_;
    std::shared_ptr<const CrossCache> cross_;
    GroupTagSeq g_x_;
    std::vector<SiteCache> self_cache_;
    std::vector<TokenId> tokens_;
    GroupTagSeq tags_;
};

/// Partition of parameters for fine-tuning with two learning rates.
enum class ParamGroup { transferred, fresh };

struct TransferResult {
    ParamStore params;
    std::map<std::string, ParamGroup> partition;
};

/// Copies every parameter of a sentence-level model whose name and shape
/// appear in the fresh group-tag model (attention heads into the local
/// branch, feed-forward, norms, embeddings); global heads and gates keep
/// their fresh values.
[[nodiscard]] TransferResult transfer_from_sentence_model(const ParamStore& sentence_params,
                                                          const ParamStore& fresh_params);

}  // namespace gtr
