#include "imitate/condunet.hpp"

#include <cmath>

#include "imitate/rng.hpp"

namespace imitate::unet {

void ModelConfig::validate() const {
    require(n_inputs >= 1 && n_inputs <= 8, "n_inputs must lie in [1,8]");
    require(depth >= 2, "depth must be at least 2");
    require(static_cast<int>(channels.size()) == depth, "channels must list one width per level");
    require(embed_dim >= 2 && embed_dim % 2 == 0, "embed_dim must be even and >= 2");
    require(head_init_scale >= 0.0, "head_init_scale must be non-negative");
}

void ConditioningContext::validate() const {
    require(!movers.empty(), "context needs at least one moving image");
    require(movers.size() == deltas.size(), "one delta per moving image required");
    for (double d : deltas) require(std::isfinite(d), "deltas must be finite");
    for (const auto& m : movers)
        require(m.same_shape(movers[0]), "moving images must share a shape");
    if (!mover_masks.empty())
        require(mover_masks.size() == movers.size(), "one mask per mover when masks are used");
}

Tensor sinusoidal_features(double delta, int embed_dim) {
    require(embed_dim >= 2 && embed_dim % 2 == 0, "embed_dim must be even and >= 2");
    const int k = embed_dim / 2;
    Tensor out({embed_dim});
    for (int i = 0; i < k; ++i) {
        double frac = k == 1 ? 1.0 : static_cast<double>(i) / (k - 1);
        double omega = 1e-4 * std::pow(1e4, frac);  // geometric in [1e-4, 1]
        out[i] = std::sin(delta / omega);
        out[k + i] = std::cos(delta / omega);
    }
    return out;
}

Tensor& ParamSet::add(const std::string& name, Tensor init) {
    require(!index_.count(name), "duplicate parameter: " + name);
    index_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    return values_[name] = std::move(init);
}

Tensor& ParamSet::get(const std::string& name) {
    auto it = values_.find(name);
    require(it != values_.end(), "unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamSet::get(const std::string& name) const {
    auto it = values_.find(name);
    require(it != values_.end(), "unknown parameter: " + name);
    return it->second;
}

ad::Var embed_deltas(const std::vector<double>& deltas, int embed_dim, const ParamBinder& p) {
    require(!deltas.empty(), "embed_deltas: empty delta list");
    Tensor raw({static_cast<int>(deltas.size()) * embed_dim});
    for (size_t i = 0; i < deltas.size(); ++i) {
        Tensor f = sinusoidal_features(deltas[i], embed_dim);
        std::copy(f.data(), f.data() + f.numel(), raw.data() + i * embed_dim);
    }
    ad::Var h = ad::linear(ad::constant(raw), p("embed.fc1.w"), p("embed.fc1.b"));
    h = ad::relu(h);
    return ad::linear(h, p("embed.fc2.w"), p("embed.fc2.b"));
}

ad::Var film_modulate(const ad::Var& features, const ad::Var& embedding, const ad::Var& fc_w,
                      const ad::Var& fc_b) {
    const int c = features->value.dim(2);
    require(fc_w->value.dim(0) == 2 * c, "film FC must produce 2*C outputs");
    require(fc_w->value.dim(1) == embedding->value.dim(0), "film FC/embedding dim mismatch");
    ad::Var s = ad::linear(embedding, fc_w, fc_b);
    ad::Var s1 = ad::slice_vec(s, 0, c);
    ad::Var s2 = ad::slice_vec(s, c, 2 * c);
    return ad::channel_affine(features, ad::add_scalar(s1, 1.0), s2);
}

ad::Var attention_gate(const ad::Var& skip, const ad::Var& gating,
                       const AttentionGateParams& p) {
    require(skip->value.rank() == 3 && gating->value.rank() == 3,
            "attention_gate expects {H,W,C} features");
    require(skip->value.dim(0) == 2 * gating->value.dim(0) &&
                skip->value.dim(1) == 2 * gating->value.dim(1),
            "gating must come from the next-coarser level");
    ad::Var xs = ad::conv2d(skip, p.wx, p.bias, /*stride=*/2, /*pad=*/0);
    Tensor zero_b({p.wg->value.dim(1)});
    ad::Var gs = ad::conv2d(gating, p.wg, ad::constant(zero_b), 1, 0);
    ad::Var q = ad::relu(ad::add(xs, gs));
    ad::Var att = ad::sigmoid(ad::conv2d(q, p.psi_w, p.psi_b, 1, 0));
    return ad::gate_mul(skip, ad::upsample2_nearest(att));
}

namespace {

Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    double std = std::sqrt(2.0 / fan_in) * scale;
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * std;
    return t;
}

constexpr double kLeakSlope = 0.2;

struct Builder {
    const CondUNet& net;
    const ParamBinder& p;
    ad::Var embedding;  // null when unconditioned

    ad::Var block(const std::string& name, const ad::Var& input) const {
        ad::Var h = input;
        if (embedding)
            h = film_modulate(h, embedding, p(name + ".film.w"), p(name + ".film.b"));
        h = ad::leaky_relu(ad::conv2d(h, p(name + ".conv1.w"), p(name + ".conv1.b"), 1, 1),
                           kLeakSlope);
        h = ad::leaky_relu(ad::conv2d(h, p(name + ".conv2.w"), p(name + ".conv2.b"), 1, 1),
                           kLeakSlope);
        return h;
    }
};

}  // namespace

CondUNet CondUNet::init(const ModelConfig& config, uint64_t seed) {
    config.validate();
    CondUNet net;
    net.config = config;
    Rng rng = Rng(seed).fork(0x10de1);

    const auto& ch = config.channels;
    const int ed = config.embed_dim;
    const int n = config.n_inputs;
    const int in_ch = config.in_channels();

    auto conv_param = [&](const std::string& name, int cout, int cin, int k, double scale = 1.0) {
        net.params.add(name + ".w", he_init({cin * k * k, cout}, cin * k * k, rng, scale));
        net.params.add(name + ".b", Tensor({cout}));
    };
    auto film_param = [&](const std::string& name, int cin) {
        if (!config.conditioned) return;
        // Zero init: every block starts as an identity modulation.
        net.params.add(name + ".film.w", Tensor({2 * cin, ed}));
        net.params.add(name + ".film.b", Tensor({2 * cin}));
    };
    auto block_param = [&](const std::string& name, int cin, int cout) {
        film_param(name, cin);
        conv_param(name + ".conv1", cout, cin, 3);
        conv_param(name + ".conv2", cout, cout, 3);
    };

    if (config.conditioned) {
        net.params.add("embed.fc1.w", he_init({ed, n * ed}, n * ed, rng));
        net.params.add("embed.fc1.b", Tensor({ed}));
        net.params.add("embed.fc2.w", he_init({ed, ed}, ed, rng));
        net.params.add("embed.fc2.b", Tensor({ed}));
    }

    block_param("enc0", in_ch, ch[0]);
    for (int l = 1; l < config.depth; ++l) {
        conv_param("down" + std::to_string(l), ch[l], ch[l - 1], 3);
        block_param("enc" + std::to_string(l), ch[l], ch[l]);
    }
    for (int l = config.depth - 2; l >= 0; --l) {
        std::string dl = "dec" + std::to_string(l);
        conv_param(dl + ".up", ch[l], ch[l + 1], 3);
        if (config.use_attention_gates) {
            int fi = std::max(1, ch[l] / 2);
            std::string al = "att" + std::to_string(l);
            conv_param(al + ".wx", fi, ch[l], 1);  // its bias acts on the summed features
            net.params.add(al + ".wg.w", he_init({ch[l + 1], fi}, ch[l + 1], rng));
            conv_param(al + ".psi", 1, fi, 1);
        }
        block_param(dl, 2 * ch[l], ch[l]);
    }
    conv_param("head", 2 * n, ch[0], 1, config.head_init_scale);
    return net;
}

std::vector<ad::Var> CondUNet::forward_graph(const ad::Var& input_stack,
                                             const std::vector<double>& deltas,
                                             const ParamBinder& p) const {
    const Tensor& x = input_stack->value;
    require(x.rank() == 3 && x.dim(2) == config.in_channels(),
            "input stack must be {H,W,n_channels}");
    require(static_cast<int>(deltas.size()) == config.n_inputs,
            "one delta per moving image required");
    const int H = x.dim(0), W = x.dim(1);
    const int div = 1 << config.depth;
    require(H % div == 0 && W % div == 0, "spatial size must be divisible by 2^depth");

    Builder b{*this, p, nullptr};
    if (config.conditioned) b.embedding = embed_deltas(deltas, config.embed_dim, p);

    std::vector<ad::Var> skips;
    ad::Var h = b.block("enc0", input_stack);
    for (int l = 1; l < config.depth; ++l) {
        skips.push_back(h);
        h = ad::leaky_relu(ad::conv2d(h, p("down" + std::to_string(l) + ".w"),
                                      p("down" + std::to_string(l) + ".b"), 2, 1),
                           kLeakSlope);
        h = b.block("enc" + std::to_string(l), h);
    }
    for (int l = config.depth - 2; l >= 0; --l) {
        std::string dl = "dec" + std::to_string(l);
        ad::Var gating = h;
        ad::Var up = ad::leaky_relu(ad::conv2d(ad::upsample2_nearest(h), p(dl + ".up.w"),
                                               p(dl + ".up.b"), 1, 1),
                                    kLeakSlope);
        ad::Var skip = skips[static_cast<size_t>(l)];
        if (config.use_attention_gates) {
            std::string al = "att" + std::to_string(l);
            AttentionGateParams ap{p(al + ".wx.w"), p(al + ".wg.w"), p(al + ".wx.b"),
                                   p(al + ".psi.w"), p(al + ".psi.b")};
            skip = attention_gate(skip, gating, ap);
        }
        h = b.block(dl, ad::concat_ch(up, skip));
    }
    ad::Var out = ad::conv2d(h, p("head.w"), p("head.b"), 1, 0);
    std::vector<ad::Var> fields;
    fields.reserve(static_cast<size_t>(config.n_inputs));
    for (int i = 0; i < config.n_inputs; ++i)
        fields.push_back(ad::slice_ch(out, 2 * i, 2 * i + 2));
    return fields;
}

ParamBinder CondUNet::constant_binder() const {
    return [this](const std::string& name) { return ad::constant(params.get(name)); };
}

std::vector<Tensor> CondUNet::forward(const Tensor& input_stack,
                                      const std::vector<double>& deltas) const {
    auto fields = forward_graph(ad::constant(input_stack), deltas, constant_binder());
    std::vector<Tensor> out;
    out.reserve(fields.size());
    for (auto& f : fields) out.push_back(f->value);
    return out;
}

Tensor CondUNet::stack_inputs(const ConditioningContext& ctx, bool with_fixed) {
    ctx.validate();
    const int H = ctx.movers[0].dim(0), W = ctx.movers[0].dim(1);
    const int n = ctx.n();
    const int nch = n + (with_fixed ? 1 : 0);
    if (with_fixed) {
        require(!ctx.fixed.empty(), "with_fixed model requires a fixed image in the context");
        require(ctx.fixed.same_shape(ctx.movers[0]), "fixed image shape mismatch");
    }
    Tensor out({H, W, nch});
    const size_t npix = static_cast<size_t>(H) * W;
    for (size_t p = 0; p < npix; ++p) {
        double* dst = out.data() + p * nch;
        int c = 0;
        if (with_fixed) dst[c++] = ctx.fixed[p];
        for (const auto& m : ctx.movers) dst[c++] = m[p];
    }
    return out;
}

}  // namespace imitate::unet
