#include "gtr/model.hpp"

#include <cmath>

#include "gtr/errors.hpp"
#include "gtr/layers.hpp"

namespace gtr {

using Eigen::MatrixXd;

std::string_view to_string(Variant v) { return v == Variant::baseline ? "baseline-transformer" : "g-transformer"; }

Variant parse_variant(std::string_view s) {
    if (s == "baseline-transformer" || s == "baseline" || s == "transformer") return Variant::baseline;
    if (s == "g-transformer" || s == "gtransformer") return Variant::gtransformer;
    throw ConfigError("unknown model variant: " + std::string(s));
}

void ModelConfig::validate() const {
    if (vocab_size <= 4) throw ConfigError("vocab_size must exceed the 4 reserved ids");
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1) throw ConfigError("model sizes must be positive");
    if (d_model % n_heads != 0) throw ConfigError("n_heads must divide d_model");
    if (k_combined < 0 || k_combined > n_layers) throw ConfigError("k_combined must lie in [0, n_layers]");
    if (!(gamma <= 0.0)) throw ConfigError("gamma must be non-positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(word_dropout >= 0.0 && word_dropout <= 1.0)) throw ConfigError("word_dropout must lie in [0, 1]");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must lie in [0, 1)");
}

bool ModelConfig::has_global(int layer, AttentionSite site) const {
    if (!combined_layer(layer)) return false;
    switch (site) {
        case AttentionSite::encoder_self: return global_sites.encoder_self;
        case AttentionSite::decoder_self: return global_sites.decoder_self;
        case AttentionSite::cross: return global_sites.cross;
    }
    return false;
}

ModelConfig ModelConfig::base() { return ModelConfig{}; }

ModelConfig ModelConfig::big() {
    ModelConfig c;
    c.n_heads = 16;
    c.d_model = 1024;
    c.d_ff = 4096;
    return c;
}

ModelConfig ModelConfig::large() {
    ModelConfig c = big();
    c.n_layers = 12;
    return c;
}

KeyValues to_key_values(const ModelConfig& c) {
    return {
        {"vocab_size", std::to_string(c.vocab_size)},
        {"n_layers", std::to_string(c.n_layers)},
        {"n_heads", std::to_string(c.n_heads)},
        {"d_model", std::to_string(c.d_model)},
        {"d_ff", std::to_string(c.d_ff)},
        {"k_combined", std::to_string(c.k_combined)},
        {"gamma", format_double(c.gamma)},
        {"variant", std::string(to_string(c.variant))},
        {"dropout", format_double(c.dropout)},
        {"word_dropout", format_double(c.word_dropout)},
        {"label_smoothing", format_double(c.label_smoothing)},
        {"global_encoder_self", c.global_sites.encoder_self ? "true" : "false"},
        {"global_decoder_self", c.global_sites.decoder_self ? "true" : "false"},
        {"global_cross", c.global_sites.cross ? "true" : "false"},
    };
}

bool set_model_field(ModelConfig& c, const std::string& key, const std::string& value) {
    if (key == "vocab_size") c.vocab_size = parse_int(key, value);
    else if (key == "n_layers") c.n_layers = parse_int(key, value);
    else if (key == "n_heads") c.n_heads = parse_int(key, value);
    else if (key == "d_model") c.d_model = parse_int(key, value);
    else if (key == "d_ff") c.d_ff = parse_int(key, value);
    else if (key == "k_combined") c.k_combined = parse_int(key, value);
    else if (key == "gamma") c.gamma = parse_double(key, value);
    else if (key == "variant") c.variant = parse_variant(value);
    else if (key == "dropout") c.dropout = parse_double(key, value);
    else if (key == "word_dropout") c.word_dropout = parse_double(key, value);
    else if (key == "label_smoothing") c.label_smoothing = parse_double(key, value);
    else if (key == "global_encoder_self") c.global_sites.encoder_self = parse_bool(key, value);
    else if (key == "global_decoder_self") c.global_sites.decoder_self = parse_bool(key, value);
    else if (key == "global_cross") c.global_sites.cross = parse_bool(key, value);
    else return false;
    return true;
}

ModelConfig model_config_from(const KeyValues& kv) {
    ModelConfig c;
    for (const auto& [k, v] : kv) set_model_field(c, k, v);
    c.validate();
    return c;
}

namespace {

std::string site_name(int layer, AttentionSite site) {
    switch (site) {
        case AttentionSite::encoder_self: return "enc." + std::to_string(layer) + ".self";
        case AttentionSite::decoder_self: return "dec." + std::to_string(layer) + ".self";
        case AttentionSite::cross: return "dec." + std::to_string(layer) + ".cross";
    }
    return {};
}

std::string stack_prefix(bool decoder, int layer) { return (decoder ? "dec." : "enc.") + std::to_string(layer) + "."; }

/// Expected parameter names and shapes for a configuration, in
/// initialisation order.
struct ParamSpec {
    std::string name;
    Eigen::Index rows;
    Eigen::Index cols;
    enum class Init { normal_embedding, xavier, zeros, ones } init;
};

std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
    using Init = ParamSpec::Init;
    const Eigen::Index d = c.d_model;
    std::vector<ParamSpec> specs;
    specs.push_back({"embed", c.vocab_size, d, Init::normal_embedding});
    auto heads = [&](const std::string& p) {
        for (const char* w : {".wq", ".wk", ".wv", ".wo"}) specs.push_back({p + w, d, d, Init::xavier});
    };
    auto site = [&](int layer, AttentionSite s) {
        const std::string name = site_name(layer, s);
        heads(name);
        if (c.has_global(layer, s)) {
            heads(name + "_global");
            specs.push_back({name + "_gate.w", 2 * d, d, Init::xavier});
            specs.push_back({name + "_gate.b", 1, d, Init::zeros});
        }
    };
    auto norm = [&](const std::string& p) {
        specs.push_back({p + ".g", 1, d, Init::ones});
        specs.push_back({p + ".b", 1, d, Init::zeros});
    };
    auto ffn = [&](const std::string& p) {
        specs.push_back({p + "ffn.w1", d, c.d_ff, Init::xavier});
        specs.push_back({p + "ffn.b1", 1, c.d_ff, Init::zeros});
        specs.push_back({p + "ffn.w2", c.d_ff, d, Init::xavier});
        specs.push_back({p + "ffn.b2", 1, d, Init::zeros});
    };
    for (int l = 0; l < c.n_layers; ++l) {
        const std::string p = stack_prefix(false, l);
        site(l, AttentionSite::encoder_self);
        norm(p + "ln1");
        ffn(p);
        norm(p + "ln2");
    }
    for (int l = 0; l < c.n_layers; ++l) {
        const std::string p = stack_prefix(true, l);
        site(l, AttentionSite::decoder_self);
        norm(p + "ln1");
        site(l, AttentionSite::cross);
        norm(p + "ln2");
        ffn(p);
        norm(p + "ln3");
    }
    return specs;
}

Matrix<double> site_mask(bool grouped, std::span<const GroupTag> g_q, std::span<const GroupTag> g_k, bool causal,
                         double gamma, Index query_offset) {
    const auto len_q = static_cast<Index>(g_q.size());
    const auto len_k = static_cast<Index>(g_k.size());
    Matrix<double> m = grouped ? group_mask<double>(g_q, g_k, gamma) : key_padding_mask<double>(len_q, g_k, gamma);
    // Causality never depends on the configurable group penalty.
    if (causal) m += causal_mask<double>(len_q, len_k, kDefaultGamma, query_offset);
    return m;
}

}  // namespace

Transformer::Transformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    init_parameters(seed);
}

Transformer::Transformer(const ModelConfig& config, ParamStore params) : config_(config), params_(std::move(params)) {
    config_.validate();
    check_parameters();
}

void Transformer::init_parameters(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& spec : parameter_layout(config_)) {
        MatrixXd value;
        switch (spec.init) {
            case ParamSpec::Init::normal_embedding:
                value = normal_matrix(spec.rows, spec.cols, 1.0 / std::sqrt(static_cast<double>(config_.d_model)), rng);
                break;
            case ParamSpec::Init::xavier: value = xavier_uniform(spec.rows, spec.cols, rng); break;
            case ParamSpec::Init::zeros: value = MatrixXd::Zero(spec.rows, spec.cols); break;
            case ParamSpec::Init::ones: value = MatrixXd::Ones(spec.rows, spec.cols); break;
        }
        params_.add(spec.name, std::move(value));
    }
}

void Transformer::check_parameters() const {
    const auto layout = parameter_layout(config_);
    if (layout.size() != params_.size()) {
        throw ShapeError("parameter count " + std::to_string(params_.size()) + " does not match configuration (" +
                         std::to_string(layout.size()) + ")");
    }
    for (const auto& spec : layout) {
        if (!params_.contains(spec.name)) throw ShapeError("missing parameter " + spec.name);
        const auto& p = params_.at(spec.name);
        if (p.value.rows() != spec.rows || p.value.cols() != spec.cols) {
            throw ShapeError("parameter " + spec.name + " has the wrong shape");
        }
    }
}

bool Transformer::is_global_branch(const std::string& name) {
    return name.find("_global.") != std::string::npos || name.find("_gate.") != std::string::npos;
}

Var Transformer::embed(Tape& tape, std::span<const TokenId> tokens) const {
    const Var table = tape.parameter(params_.at("embed"));
    const Var rows = ag::scale(ag::embedding(table, tokens), std::sqrt(static_cast<double>(config_.d_model)));
    return ag::add_constant(rows, sinusoidal_positions(static_cast<Index>(tokens.size()), config_.d_model));
}

namespace {

struct HeadVars {
    Var wq, wk, wv, wo;
};

HeadVars head_vars(Tape& tape, const ParamStore& params, const std::string& prefix) {
    return {tape.parameter(params.at(prefix + ".wq")), tape.parameter(params.at(prefix + ".wk")),
            tape.parameter(params.at(prefix + ".wv")), tape.parameter(params.at(prefix + ".wo"))};
}

Var multi_head_var(const HeadVars& w, Var query, Var memory, const Matrix<double>& mask, int n_heads,
                   AttentionRecord* record_template, AttentionTrace* trace) {
    const Var qp = ag::matmul(query, w.wq);
    const Var kp = ag::matmul(memory, w.wk);
    const Var vp = ag::matmul(memory, w.wv);
    const Index d_k = qp.cols() / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        const Var scores =
            ag::scale(ag::matmul_nt(ag::slice_cols(qp, h * d_k, d_k), ag::slice_cols(kp, h * d_k, d_k)), scale);
        const Var p = ag::masked_softmax(scores, mask);
        if (trace != nullptr) {
            AttentionRecord r = *record_template;
            r.head = h;
            r.weights = p.value();
            trace->records.push_back(std::move(r));
        }
        heads.push_back(ag::matmul(p, ag::slice_cols(vp, h * d_k, d_k)));
    }
    return ag::matmul(ag::concat_cols(heads), w.wo);
}

}  // namespace

Var Transformer::attention_site(Tape& tape, int layer, AttentionSite site, Var query, Var memory,
                                std::span<const GroupTag> g_q, std::span<const GroupTag> g_k, bool causal,
                                ForwardContext& ctx) const {
    const std::string name = site_name(layer, site);
    const bool grouped = config_.variant == Variant::gtransformer;
    AttentionRecord tmpl;
    if (ctx.trace != nullptr) {
        tmpl.site = site;
        tmpl.layer = layer;
        tmpl.query_tags.assign(g_q.begin(), g_q.end());
        tmpl.key_tags.assign(g_k.begin(), g_k.end());
        tmpl.branch = grouped ? AttentionBranch::local : AttentionBranch::global;
    }
    const Var local = multi_head_var(head_vars(tape, params_, name), query, memory,
                                     site_mask(grouped, g_q, g_k, causal, config_.gamma, 0), config_.n_heads, &tmpl,
                                     ctx.trace);
    if (!config_.has_global(layer, site)) return local;

    tmpl.branch = AttentionBranch::global;
    const Var global = multi_head_var(head_vars(tape, params_, name + "_global"), query, memory,
                                      site_mask(false, g_q, g_k, causal, config_.gamma, 0), config_.n_heads, &tmpl,
                                      ctx.trace);
    const std::array<Var, 2> both{local, global};
    const Var z = ag::add_row(ag::matmul(ag::concat_cols(both), tape.parameter(params_.at(name + "_gate.w"))),
                              tape.parameter(params_.at(name + "_gate.b")));
    const Var g = ag::sigmoid(z);
    return ag::add(ag::hadamard(local, g), ag::hadamard(global, ag::one_minus(g)));
}

Var Transformer::encode(Tape& tape, std::span<const TokenId> src, std::span<const GroupTag> g_x,
                        ForwardContext& ctx) const {
    if (src.empty()) throw StructureError("cannot encode an empty document", 0);
    if (src.size() != g_x.size()) throw ShapeError("source tags must align with source tokens");
    auto norm = [&](Var x, const std::string& p) {
        return ag::layer_norm(x, tape.parameter(params_.at(p + ".g")), tape.parameter(params_.at(p + ".b")),
                              kLayerNormEps);
    };
    Var x = dropout(embed(tape, src), config_.dropout, ctx.training, ctx.rng);
    for (int l = 0; l < config_.n_layers; ++l) {
        const std::string p = stack_prefix(false, l);
        const Var a = attention_site(tape, l, AttentionSite::encoder_self, x, x, g_x, g_x, false, ctx);
        x = norm(ag::add(x, dropout(a, config_.dropout, ctx.training, ctx.rng)), p + "ln1");
        const Var f = feed_forward(x, tape.parameter(params_.at(p + "ffn.w1")), tape.parameter(params_.at(p + "ffn.b1")),
                                   tape.parameter(params_.at(p + "ffn.w2")), tape.parameter(params_.at(p + "ffn.b2")));
        x = norm(ag::add(x, dropout(f, config_.dropout, ctx.training, ctx.rng)), p + "ln2");
    }
    return x;
}

Var Transformer::decode(Tape& tape, Var enc_out, std::span<const GroupTag> g_x, std::span<const TokenId> tgt_in,
                        std::span<const GroupTag> g_y, ForwardContext& ctx) const {
    if (tgt_in.empty()) throw StructureError("decoder input must not be empty", 0);
    if (tgt_in.size() != g_y.size()) throw ShapeError("target tags must align with target tokens");
    if (static_cast<std::size_t>(enc_out.rows()) != g_x.size()) throw ShapeError("encoder rows must match source tags");
    auto norm = [&](Var x, const std::string& p) {
        return ag::layer_norm(x, tape.parameter(params_.at(p + ".g")), tape.parameter(params_.at(p + ".b")),
                              kLayerNormEps);
    };
    Var y = dropout(embed(tape, tgt_in), config_.dropout, ctx.training, ctx.rng);
    for (int l = 0; l < config_.n_layers; ++l) {
        const std::string p = stack_prefix(true, l);
        const Var a = attention_site(tape, l, AttentionSite::decoder_self, y, y, g_y, g_y, true, ctx);
        y = norm(ag::add(y, dropout(a, config_.dropout, ctx.training, ctx.rng)), p + "ln1");
        const Var c = attention_site(tape, l, AttentionSite::cross, y, enc_out, g_y, g_x, false, ctx);
        y = norm(ag::add(y, dropout(c, config_.dropout, ctx.training, ctx.rng)), p + "ln2");
        const Var f = feed_forward(y, tape.parameter(params_.at(p + "ffn.w1")), tape.parameter(params_.at(p + "ffn.b1")),
                                   tape.parameter(params_.at(p + "ffn.w2")), tape.parameter(params_.at(p + "ffn.b2")));
        y = norm(ag::add(y, dropout(f, config_.dropout, ctx.training, ctx.rng)), p + "ln3");
    }
    return ag::matmul_nt(y, tape.parameter(params_.at("embed")));
}

MatrixXd Transformer::encode(const TokenDocument& src, std::span<const GroupTag> g_x) const {
    Tape tape(false);
    ForwardContext ctx;
    return encode(tape, src.tokens, g_x, ctx).value();
}

Eigen::VectorXd Transformer::decode_step(std::span<const TokenId> prefix, std::span<const GroupTag> g_prefix,
                                         const MatrixXd& enc_out, std::span<const GroupTag> g_x) const {
    if (prefix.size() != g_prefix.size()) throw ShapeError("tag prefix length differs from token prefix length");
    Tape tape(false);
    ForwardContext ctx;
    const Var enc = tape.constant(enc_out);
    const Var logits = decode(tape, enc, g_x, prefix, g_prefix, ctx);
    const Matrix<double> last = logits.value().bottomRows(1);
    return log_softmax_rows(last).row(0).transpose();
}

std::shared_ptr<const InferenceWeights> Transformer::snapshot() const {
    auto w = std::make_shared<InferenceWeights>();
    w->config = config_;
    w->embedding = params_.at("embed").value;
    auto heads = [&](const std::string& p) {
        HeadProjections<double> h;
        h.n_heads = config_.n_heads;
        h.w_q = params_.at(p + ".wq").value;
        h.w_k = params_.at(p + ".wk").value;
        h.w_v = params_.at(p + ".wv").value;
        h.w_o = params_.at(p + ".wo").value;
        return h;
    };
    auto site = [&](int layer, AttentionSite s) {
        InferenceWeights::Site out;
        const std::string name = site_name(layer, s);
        out.grouped = config_.variant == Variant::gtransformer;
        out.local = heads(name);
        if (config_.has_global(layer, s)) {
            out.global = heads(name + "_global");
            out.gate = GateParams<double>{params_.at(name + "_gate.w").value, params_.at(name + "_gate.b").value};
        }
        return out;
    };
    auto norm = [&](const std::string& p) {
        return InferenceWeights::Norm{params_.at(p + ".g").value, params_.at(p + ".b").value};
    };
    for (int l = 0; l < config_.n_layers; ++l) {
        const std::string p = stack_prefix(true, l);
        InferenceWeights::DecoderLayer layer;
        layer.self_attn = site(l, AttentionSite::decoder_self);
        layer.cross = site(l, AttentionSite::cross);
        layer.ln1 = norm(p + "ln1");
        layer.ln2 = norm(p + "ln2");
        layer.ln3 = norm(p + "ln3");
        layer.ffn = {params_.at(p + "ffn.w1").value, params_.at(p + "ffn.w2").value, params_.at(p + "ffn.b1").value,
                     params_.at(p + "ffn.b2").value};
        w->decoder.push_back(std::move(layer));
    }
    return w;
}

TeacherForcedExample make_teacher_forced(const TokenDocument& src, const TokenDocument& tgt) {
    if (tgt.tokens.size() < 2) throw StructureError("target document needs at least two tokens", tgt.tokens.size());
    TeacherForcedExample ex;
    ex.src = src.tokens;
    ex.g_x = build_group_tags(src);
    (void)build_group_tags(tgt);
    ex.tgt_in.assign(tgt.tokens.begin(), tgt.tokens.end() - 1);
    ex.tgt_out.assign(tgt.tokens.begin() + 1, tgt.tokens.end());
    ex.g_y = incremental_tags(ex.tgt_in);
    return ex;
}

std::vector<double> gold_log_probs(const Transformer& model, const TokenDocument& src, const TokenDocument& tgt) {
    const auto ex = make_teacher_forced(src, tgt);
    Tape tape(false);
    ForwardContext ctx;
    const Var enc = model.encode(tape, ex.src, ex.g_x, ctx);
    const Var logits = model.decode(tape, enc, ex.g_x, ex.tgt_in, ex.g_y, ctx);
    const Matrix<double> logp = log_softmax_rows<double>(logits.value());
    std::vector<double> out;
    for (std::size_t i = 0; i < ex.tgt_out.size(); ++i) {
        if (ex.tgt_out[i] == kSpecial.pad) continue;
        out.push_back(logp(static_cast<Index>(i), ex.tgt_out[i]));
    }
    return out;
}

IncrementalDecoder::IncrementalDecoder(std::shared_ptr<const InferenceWeights> weights, const MatrixXd& enc_out,
                                       GroupTagSeq g_x)
    : weights_(std::move(weights)), g_x_(std::move(g_x)) {
    if (static_cast<Index>(g_x_.size()) != enc_out.rows()) throw ShapeError("encoder rows must match source tags");
    auto cross = std::make_shared<CrossCache>();
    for (const auto& layer : weights_->decoder) {
        SiteCache c;
        c.local = {enc_out * layer.cross.local.w_k, enc_out * layer.cross.local.w_v};
        if (layer.cross.global) c.global = {enc_out * layer.cross.global->w_k, enc_out * layer.cross.global->w_v};
        cross->layers.push_back(std::move(c));
    }
    cross_ = std::move(cross);
    self_cache_.resize(weights_->decoder.size());
}

Matrix<double> IncrementalDecoder::site_step(const InferenceWeights::Site& site, const Matrix<double>& query,
                                             const SiteCache& cache, std::span<const GroupTag> g_k,
                                             GroupTag g_q) const {
    const double gamma = weights_->config.gamma;
    const std::array<GroupTag, 1> gq{g_q};
    const Matrix<double> local_mask = site.grouped ? group_mask<double>(gq, g_k, gamma)
                                                   : key_padding_mask<double>(1, g_k, gamma);
    Matrix<double> local = multi_head_projected<double>(query * site.local.w_q, cache.local.k, cache.local.v,
                                                        local_mask, site.local.n_heads, site.local.w_o)
                               .output;
    if (!site.global) return local;
    const Matrix<double> global_mask = key_padding_mask<double>(1, g_k, gamma);
    Matrix<double> global = multi_head_projected<double>(query * site.global->w_q, cache.global.k, cache.global.v,
                                                         global_mask, site.global->n_heads, site.global->w_o)
                                .output;
    return gate_sum(local, global, gate_values(local, global, *site.gate));
}

Eigen::VectorXd IncrementalDecoder::step(TokenId token) {
    const GroupTag prev_tag = tags_.empty() ? 0 : tags_.back();
    const TokenId prev_token = tokens_.empty() ? kSpecial.pad : tokens_.back();
    const GroupTag tag = token == kSpecial.pad ? 0 : next_tag(prev_token, prev_tag, kSpecial.eos, kSpecial.bos);
    const auto position = static_cast<Index>(tokens_.size());
    tokens_.push_back(token);
    tags_.push_back(tag);

    const auto& cfg = weights_->config;
    if (token < 0 || token >= weights_->embedding.rows()) throw ShapeError("token id out of range");
    Matrix<double> x = weights_->embedding.row(token) * std::sqrt(static_cast<double>(cfg.d_model));
    x += sinusoidal_positions(1, cfg.d_model, position);

    auto append = [](Matrix<double>& m, const Matrix<double>& row) {
        m.conservativeResize(m.rows() + 1, row.cols());
        m.bottomRows(1) = row;
    };
    for (std::size_t l = 0; l < weights_->decoder.size(); ++l) {
        const auto& layer = weights_->decoder[l];
        SiteCache& cache = self_cache_[l];
        append(cache.local.k, x * layer.self_attn.local.w_k);
        append(cache.local.v, x * layer.self_attn.local.w_v);
        if (layer.self_attn.global) {
            append(cache.global.k, x * layer.self_attn.global->w_k);
            append(cache.global.v, x * layer.self_attn.global->w_v);
        }
        const Matrix<double> a = site_step(layer.self_attn, x, cache, tags_, tag);
        x = layer_norm<double>(x + a, layer.ln1.gain, layer.ln1.bias);
        const Matrix<double> c = site_step(layer.cross, x, cross_->layers[l], g_x_, tag);
        x = layer_norm<double>(x + c, layer.ln2.gain, layer.ln2.bias);
        const Matrix<double> f = feed_forward<double>(x, layer.ffn.w1, layer.ffn.b1, layer.ffn.w2, layer.ffn.b2);
        x = layer_norm<double>(x + f, layer.ln3.gain, layer.ln3.bias);
    }
    const Matrix<double> logits = x * weights_->embedding.transpose();
    return log_softmax_rows(logits).row(0).transpose();
}

TransferResult transfer_from_sentence_model(const ParamStore& sentence_params, const ParamStore& fresh_params) {
    TransferResult out;
    for (const auto& p : fresh_params) {
        const bool transferable = !Transformer::is_global_branch(p.name);
        if (transferable) {
            if (!sentence_params.contains(p.name)) throw ShapeError("sentence model lacks parameter " + p.name);
            const auto& src = sentence_params.at(p.name);
            if (src.value.rows() != p.value.rows() || src.value.cols() != p.value.cols()) {
                throw ShapeError("width mismatch for parameter " + p.name);
            }
            out.params.add(p.name, src.value);
            out.partition[p.name] = ParamGroup::transferred;
        } else {
            out.params.add(p.name, p.value);
            out.partition[p.name] = ParamGroup::fresh;
        }
    }
    return out;
}

}  // namespace gtr
