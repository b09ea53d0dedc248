#include "graspcount/nn.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <numeric>

#include "graspcount/errors.hpp"
#include "graspcount/kernels.hpp"

namespace graspcount::nn {

namespace {

constexpr int kKernel = 3;
constexpr int kTaps = kKernel * kKernel;

const std::map<LayerKind, std::string>& kind_names() {
    static const std::map<LayerKind, std::string> names{
        {LayerKind::dense, "dense"},
        {LayerKind::conv2d, "conv2d"},
        {LayerKind::conv_transpose2d, "conv_transpose2d"},
        {LayerKind::maxpool2x2, "maxpool2x2"},
        {LayerKind::upsample2x2, "upsample2x2"},
        {LayerKind::dropout, "dropout"},
        {LayerKind::relu, "relu"},
        {LayerKind::softmax, "softmax"},
        {LayerKind::flatten, "flatten"},
        {LayerKind::reshape, "reshape"},
    };
    return names;
}

Shape output_shape_of(const LayerSpec& spec, const Shape& in) {
    switch (spec.kind) {
        case LayerKind::dense:
            if (spec.units <= 0) throw ShapeMismatch("dense layer needs a positive width");
            return Shape::vector(spec.units);
        case LayerKind::conv2d:
        case LayerKind::conv_transpose2d:
            if (spec.units <= 0) throw ShapeMismatch("convolution needs a positive filter count");
            return {in.h, in.w, spec.units};
        case LayerKind::maxpool2x2:
            if (in.h % 2 != 0 || in.w % 2 != 0) throw ShapeMismatch("maxpool2x2 needs even height and width");
            return {in.h / 2, in.w / 2, in.c};
        case LayerKind::upsample2x2:
            return {in.h * 2, in.w * 2, in.c};
        case LayerKind::dropout:
            if (!(spec.rate >= 0.0 && spec.rate < 1.0)) throw ShapeMismatch("dropout rate must lie in [0, 1)");
            return in;
        case LayerKind::relu:
        case LayerKind::softmax:
            return in;
        case LayerKind::flatten:
            return Shape::vector(static_cast<int>(in.size()));
        case LayerKind::reshape:
            if (spec.target.size() != in.size()) throw ShapeMismatch("reshape must preserve element count");
            return spec.target;
    }
    return in;
}

// patches[p][(kh*3 + kw)*C + c] = x[h+kh-1][w+kw-1][c], zero outside the image.
void im2col(const double* x, const Shape& s, double* patches) {
    const int C = s.c;
    const std::size_t stride = static_cast<std::size_t>(kTaps) * C;
    for (int h = 0; h < s.h; ++h) {
        for (int w = 0; w < s.w; ++w) {
            double* dst = patches + (static_cast<std::size_t>(h) * s.w + w) * stride;
            for (int kh = 0; kh < kKernel; ++kh) {
                for (int kw = 0; kw < kKernel; ++kw) {
                    double* tap = dst + (kh * kKernel + kw) * C;
                    const int ih = h + kh - 1;
                    const int iw = w + kw - 1;
                    if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) {
                        std::fill(tap, tap + C, 0.0);
                    } else {
                        const double* src = x + (static_cast<std::size_t>(ih) * s.w + iw) * C;
                        std::copy(src, src + C, tap);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add patch entries back onto the image.
void col2im(const double* patches, const Shape& s, double* x) {
    const int C = s.c;
    const std::size_t stride = static_cast<std::size_t>(kTaps) * C;
    for (int h = 0; h < s.h; ++h) {
        for (int w = 0; w < s.w; ++w) {
            const double* src = patches + (static_cast<std::size_t>(h) * s.w + w) * stride;
            for (int kh = 0; kh < kKernel; ++kh) {
                const int ih = h + kh - 1;
                if (ih < 0 || ih >= s.h) continue;
                for (int kw = 0; kw < kKernel; ++kw) {
                    const int iw = w + kw - 1;
                    if (iw < 0 || iw >= s.w) continue;
                    const double* tap = src + (kh * kKernel + kw) * C;
                    double* dst = x + (static_cast<std::size_t>(ih) * s.w + iw) * C;
                    for (int c = 0; c < C; ++c) dst[c] += tap[c];
                }
            }
        }
    }
}

Matrix forward_layer(const Layer& layer, const Matrix& x, bool training, Rng* rng, std::vector<double>& aux) {
    const std::size_t B = x.rows;
    const auto& k = kernels::active();
    switch (layer.spec.kind) {
        case LayerKind::dense: {
            const std::size_t I = layer.in.size();
            const std::size_t O = layer.out.size();
            Matrix y(B, O);
            for (std::size_t b = 0; b < B; ++b) {
                const double* xr = x.data.data() + b * I;
                double* yr = y.data.data() + b * O;
                for (std::size_t o = 0; o < O; ++o) yr[o] = k.dot(xr, layer.weight.data() + o * I, I) + layer.bias[o];
            }
            return y;
        }
        case LayerKind::conv2d: {
            const std::size_t P = static_cast<std::size_t>(layer.in.h) * layer.in.w;
            const std::size_t L = static_cast<std::size_t>(kTaps) * layer.in.c;
            const std::size_t F = layer.out.c;
            aux.assign(B * P * L, 0.0);
            Matrix y(B, P * F);
            for (std::size_t b = 0; b < B; ++b) {
                double* patches = aux.data() + b * P * L;
                im2col(x.data.data() + b * x.cols, layer.in, patches);
                double* yr = y.data.data() + b * y.cols;
                for (std::size_t p = 0; p < P; ++p) {
                    for (std::size_t f = 0; f < F; ++f) {
                        yr[p * F + f] = k.dot(patches + p * L, layer.weight.data() + f * L, L) + layer.bias[f];
                    }
                }
            }
            return y;
        }
        case LayerKind::conv_transpose2d: {
            const std::size_t P = static_cast<std::size_t>(layer.in.h) * layer.in.w;
            const std::size_t Cin = layer.in.c;
            const std::size_t F = layer.out.c;
            const std::size_t L = static_cast<std::size_t>(kTaps) * F;
            Matrix y(B, P * F);
            std::vector<double> patches(P * L);
            for (std::size_t b = 0; b < B; ++b) {
                std::fill(patches.begin(), patches.end(), 0.0);
                const double* xr = x.data.data() + b * x.cols;
                for (std::size_t p = 0; p < P; ++p) {
                    for (std::size_t ci = 0; ci < Cin; ++ci) {
                        k.axpy(xr[p * Cin + ci], layer.weight.data() + ci * L, patches.data() + p * L, L);
                    }
                }
                double* yr = y.data.data() + b * y.cols;
                col2im(patches.data(), layer.out, yr);
                for (std::size_t p = 0; p < P; ++p) {
                    for (std::size_t f = 0; f < F; ++f) yr[p * F + f] += layer.bias[f];
                }
            }
            return y;
        }
        case LayerKind::maxpool2x2: {
            const Shape& in = layer.in;
            const Shape& out = layer.out;
            Matrix y(B, out.size());
            aux.assign(B * out.size(), 0.0);
            for (std::size_t b = 0; b < B; ++b) {
                const double* xr = x.data.data() + b * x.cols;
                for (int h = 0; h < out.h; ++h) {
                    for (int w = 0; w < out.w; ++w) {
                        for (int c = 0; c < out.c; ++c) {
                            std::size_t best = 0;
                            double best_v = -INFINITY;
                            for (int dh = 0; dh < 2; ++dh) {
                                for (int dw = 0; dw < 2; ++dw) {
                                    const std::size_t idx =
                                        (static_cast<std::size_t>(2 * h + dh) * in.w + (2 * w + dw)) * in.c + c;
                                    if (xr[idx] > best_v) best_v = xr[idx], best = idx;
                                }
                            }
                            const std::size_t o = (static_cast<std::size_t>(h) * out.w + w) * out.c + c;
                            y.data[b * y.cols + o] = best_v;
                            aux[b * y.cols + o] = static_cast<double>(best);
                        }
                    }
                }
            }
            return y;
        }
        case LayerKind::upsample2x2: {
            const Shape& in = layer.in;
            const Shape& out = layer.out;
            Matrix y(B, out.size());
            for (std::size_t b = 0; b < B; ++b) {
                const double* xr = x.data.data() + b * x.cols;
                double* yr = y.data.data() + b * y.cols;
                for (int h = 0; h < out.h; ++h) {
                    for (int w = 0; w < out.w; ++w) {
                        const double* src = xr + (static_cast<std::size_t>(h / 2) * in.w + w / 2) * in.c;
                        std::copy(src, src + in.c, yr + (static_cast<std::size_t>(h) * out.w + w) * out.c);
                    }
                }
            }
            return y;
        }
        case LayerKind::dropout: {
            if (!training || layer.spec.rate == 0.0) return x;
            if (!rng) throw ShapeMismatch("training-mode dropout needs a generator");
            const double keep = 1.0 - layer.spec.rate;
            Matrix y = x;
            aux.resize(x.data.size());
            for (std::size_t i = 0; i < x.data.size(); ++i) {
                aux[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
                y.data[i] *= aux[i];
            }
            return y;
        }
        case LayerKind::relu: {
            Matrix y = x;
            for (double& v : y.data) v = v > 0.0 ? v : 0.0;
            return y;
        }
        case LayerKind::softmax: {
            Matrix y = x;
            for (std::size_t b = 0; b < B; ++b) {
                auto r = y.row(b);
                const double mx = *std::max_element(r.begin(), r.end());
                double sum = 0.0;
                for (double& v : r) sum += (v = std::exp(v - mx));
                for (double& v : r) v /= sum;
            }
            return y;
        }
        case LayerKind::flatten:
        case LayerKind::reshape: {
            Matrix y = x;
            y.cols = layer.out.size();
            return y;
        }
    }
    return x;
}

// Propagates dy through one layer, accumulating parameter gradients.
Matrix backward_layer(const Layer& layer, const Matrix& x, const Matrix& y, const Matrix& dy,
                      const std::vector<double>& aux, bool training, std::vector<double>& gw, std::vector<double>& gb) {
    const std::size_t B = x.rows;
    const auto& k = kernels::active();
    switch (layer.spec.kind) {
        case LayerKind::dense: {
            const std::size_t I = layer.in.size();
            const std::size_t O = layer.out.size();
            Matrix dx(B, I);
            for (std::size_t b = 0; b < B; ++b) {
                const double* xr = x.data.data() + b * I;
                const double* dyr = dy.data.data() + b * O;
                double* dxr = dx.data.data() + b * I;
                for (std::size_t o = 0; o < O; ++o) {
                    const double g = dyr[o];
                    if (g == 0.0) continue;
                    gb[o] += g;
                    k.axpy(g, xr, gw.data() + o * I, I);
                    k.axpy(g, layer.weight.data() + o * I, dxr, I);
                }
            }
            return dx;
        }
        case LayerKind::conv2d: {
            const std::size_t P = static_cast<std::size_t>(layer.in.h) * layer.in.w;
            const std::size_t L = static_cast<std::size_t>(kTaps) * layer.in.c;
            const std::size_t F = layer.out.c;
            Matrix dx(B, x.cols);
            std::vector<double> dpatches(P * L);
            for (std::size_t b = 0; b < B; ++b) {
                const double* patches = aux.data() + b * P * L;
                const double* dyr = dy.data.data() + b * dy.cols;
                std::fill(dpatches.begin(), dpatches.end(), 0.0);
                for (std::size_t p = 0; p < P; ++p) {
                    for (std::size_t f = 0; f < F; ++f) {
                        const double g = dyr[p * F + f];
                        if (g == 0.0) continue;
                        gb[f] += g;
                        k.axpy(g, patches + p * L, gw.data() + f * L, L);
                        k.axpy(g, layer.weight.data() + f * L, dpatches.data() + p * L, L);
                    }
                }
                col2im(dpatches.data(), layer.in, dx.data.data() + b * dx.cols);
            }
            return dx;
        }
        case LayerKind::conv_transpose2d: {
            const std::size_t P = static_cast<std::size_t>(layer.in.h) * layer.in.w;
            const std::size_t Cin = layer.in.c;
            const std::size_t F = layer.out.c;
            const std::size_t L = static_cast<std::size_t>(kTaps) * F;
            Matrix dx(B, x.cols);
            std::vector<double> dpatches(P * L);
            for (std::size_t b = 0; b < B; ++b) {
                const double* xr = x.data.data() + b * x.cols;
                const double* dyr = dy.data.data() + b * dy.cols;
                im2col(dyr, layer.out, dpatches.data());
                double* dxr = dx.data.data() + b * dx.cols;
                for (std::size_t p = 0; p < P; ++p) {
                    for (std::size_t f = 0; f < F; ++f) gb[f] += dyr[p * F + f];
                    for (std::size_t ci = 0; ci < Cin; ++ci) {
                        dxr[p * Cin + ci] = k.dot(dpatches.data() + p * L, layer.weight.data() + ci * L, L);
                        const double xv = xr[p * Cin + ci];
                        if (xv != 0.0) k.axpy(xv, dpatches.data() + p * L, gw.data() + ci * L, L);
                    }
                }
            }
            return dx;
        }
        case LayerKind::maxpool2x2: {
            Matrix dx(B, x.cols);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t o = 0; o < dy.cols; ++o) {
                    const auto src = static_cast<std::size_t>(aux[b * dy.cols + o]);
                    dx.data[b * dx.cols + src] += dy.data[b * dy.cols + o];
                }
            }
            return dx;
        }
        case LayerKind::upsample2x2: {
            const Shape& in = layer.in;
            const Shape& out = layer.out;
            Matrix dx(B, x.cols);
            for (std::size_t b = 0; b < B; ++b) {
                const double* dyr = dy.data.data() + b * dy.cols;
                double* dxr = dx.data.data() + b * dx.cols;
                for (int h = 0; h < out.h; ++h) {
                    for (int w = 0; w < out.w; ++w) {
                        double* dst = dxr + (static_cast<std::size_t>(h / 2) * in.w + w / 2) * in.c;
                        const double* src = dyr + (static_cast<std::size_t>(h) * out.w + w) * out.c;
                        for (int c = 0; c < in.c; ++c) dst[c] += src[c];
                    }
                }
            }
            return dx;
        }
        case LayerKind::dropout: {
            if (!training || layer.spec.rate == 0.0) return dy;
            Matrix dx = dy;
            for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= aux[i];
            return dx;
        }
        case LayerKind::relu: {
            Matrix dx = dy;
            for (std::size_t i = 0; i < dx.data.size(); ++i) {
                if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
            }
            return dx;
        }
        case LayerKind::softmax: {
            Matrix dx(B, x.cols);
            for (std::size_t b = 0; b < B; ++b) {
                const auto yr = y.row(b);
                const auto gr = dy.row(b);
                double s = 0.0;
                for (std::size_t i = 0; i < yr.size(); ++i) s += yr[i] * gr[i];
                auto dr = dx.row(b);
                for (std::size_t i = 0; i < yr.size(); ++i) dr[i] = yr[i] * (gr[i] - s);
            }
            return dx;
        }
        case LayerKind::flatten:
        case LayerKind::reshape: {
            Matrix dx = dy;
            dx.cols = layer.in.size();
            return dx;
        }
    }
    return dy;
}

Matrix loss_gradient(const Matrix& out, const Matrix& target, Loss loss) {
    Matrix g(out.rows, out.cols);
    if (loss == Loss::mse) {
        const double scale = 2.0 / static_cast<double>(out.data.size());
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = scale * (out.data[i] - target.data[i]);
    } else {
        const double scale = 1.0 / static_cast<double>(out.rows);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            g.data[i] = target.data[i] == 0.0 ? 0.0 : -scale * target.data[i] / std::max(out.data[i], 1e-300);
        }
    }
    return g;
}

// Returns the gradient with respect to the input of layer `pass.begin`.
Matrix run_backward(const Model& model, const ForwardPass& pass, const Matrix& target, Loss loss, Gradients* grads) {
    const Matrix& out = pass.output();
    if (target.rows != out.rows || target.cols != out.cols) throw ShapeMismatch("target shape differs from output");
    const auto& layers = model.layers();
    std::size_t last = pass.end;
    Matrix dy;
    if (loss == Loss::categorical_cross_entropy && pass.end > pass.begin &&
        layers[pass.end - 1].spec.kind == LayerKind::softmax) {
        // d/dz of -sum t log softmax(z) = p * sum(t) - t.
        dy = Matrix(out.rows, out.cols);
        const double scale = 1.0 / static_cast<double>(out.rows);
        for (std::size_t b = 0; b < out.rows; ++b) {
            double tsum = 0.0;
            for (double t : target.row(b)) tsum += t;
            for (std::size_t i = 0; i < out.cols; ++i) dy(b, i) = scale * (out(b, i) * tsum - target(b, i));
        }
        last = pass.end - 1;
    } else {
        dy = loss_gradient(out, target, loss);
    }

    std::vector<double> unused_w, unused_b;
    for (std::size_t li = last; li-- > pass.begin;) {
        const Layer& layer = layers[li];
        const std::size_t k = li - pass.begin;
        std::vector<double>& gw = grads ? grads->weight[li] : unused_w;
        std::vector<double>& gb = grads ? grads->bias[li] : unused_b;
        if (!grads) {
            unused_w.assign(layer.weight.size(), 0.0);
            unused_b.assign(layer.bias.size(), 0.0);
        }
        dy = backward_layer(layer, pass.activations[k], pass.activations[k + 1], dy, pass.aux[k], pass.training, gw,
                            gb);
    }
    return dy;
}

double glorot_limit(const Layer& layer) {
    double fan_in = 0.0, fan_out = 0.0;
    switch (layer.spec.kind) {
        case LayerKind::dense:
            fan_in = static_cast<double>(layer.in.size());
            fan_out = static_cast<double>(layer.out.size());
            break;
        case LayerKind::conv2d:
        case LayerKind::conv_transpose2d:
            fan_in = static_cast<double>(kTaps * layer.in.c);
            fan_out = static_cast<double>(kTaps * layer.out.c);
            break;
        default:
            return 0.0;
    }
    return std::sqrt(6.0 / (fan_in + fan_out));
}

nlohmann::ordered_json shape_json(const Shape& s) { return nlohmann::ordered_json::array({s.h, s.w, s.c}); }

Shape shape_from_json(const nlohmann::json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

}  // namespace

Matrix Matrix::from_row(std::span<const double> v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
}

std::string to_string(LayerKind kind) { return kind_names().at(kind); }

LayerKind layer_kind_from_string(const std::string& s) {
    for (const auto& [k, name] : kind_names()) {
        if (name == s) return k;
    }
    throw FormatError("unknown layer kind '" + s + "'");
}

std::string to_string(Loss loss) { return loss == Loss::mse ? "mse" : "categorical_cross_entropy"; }

Model::Model(Shape input, std::vector<LayerSpec> specs) : input_(input) {
    if (input.h <= 0 || input.w <= 0 || input.c <= 0) throw ShapeMismatch("input shape must be positive");
    Shape cur = input;
    for (const auto& spec : specs) {
        Layer layer;
        layer.spec = spec;
        layer.in = cur;
        layer.out = output_shape_of(spec, cur);
        switch (spec.kind) {
            case LayerKind::dense:
                layer.weight.assign(layer.in.size() * layer.out.size(), 0.0);
                layer.bias.assign(layer.out.size(), 0.0);
                break;
            case LayerKind::conv2d:
            case LayerKind::conv_transpose2d:
                layer.weight.assign(static_cast<std::size_t>(kTaps) * layer.in.c * layer.out.c, 0.0);
                layer.bias.assign(layer.out.c, 0.0);
                break;
            default:
                break;
        }
        cur = layer.out;
        layers_.push_back(std::move(layer));
    }
    reset_optimizer();
}

void Model::init(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& layer : layers_) {
        const double limit = glorot_limit(layer);
        for (double& w : layer.weight) w = rng.uniform(-limit, limit);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    reset_optimizer();
}

void Model::reset_optimizer() {
    adam_steps_ = 0;
    for (auto& layer : layers_) {
        layer.weight_m.assign(layer.weight.size(), 0.0);
        layer.weight_v.assign(layer.weight.size(), 0.0);
        layer.bias_m.assign(layer.bias.size(), 0.0);
        layer.bias_v.assign(layer.bias.size(), 0.0);
    }
}

std::vector<LayerSpec> Model::specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l.spec);
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

bool Model::finite() const {
    for (const auto& l : layers_) {
        for (double v : l.weight) {
            if (!std::isfinite(v)) return false;
        }
        for (double v : l.bias) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

bool Model::same_architecture(const Model& other) const {
    return input_ == other.input_ && specs() == other.specs();
}

bool Model::same_parameters(const Model& other) const {
    if (!same_architecture(other)) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].weight != other.layers_[i].weight || layers_[i].bias != other.layers_[i].bias) return false;
    }
    return true;
}

std::string Model::to_json() const {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["input_shape"] = shape_json(input_);
    auto specs_json = nlohmann::ordered_json::array();
    auto params_json = nlohmann::ordered_json::array();
    for (const auto& l : layers_) {
        nlohmann::ordered_json s;
        s["kind"] = to_string(l.spec.kind);
        if (l.spec.units) s["units"] = l.spec.units;
        if (l.spec.kind == LayerKind::dropout) s["rate"] = l.spec.rate;
        if (l.spec.kind == LayerKind::reshape) s["target"] = shape_json(l.spec.target);
        specs_json.push_back(s);
        nlohmann::ordered_json p;
        p["weight"] = l.weight;
        p["bias"] = l.bias;
        params_json.push_back(p);
    }
    j["layer_specs"] = specs_json;
    j["parameters"] = params_json;
    return j.dump();
}

Model Model::from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("version").get<int>() != 1) throw FormatError("unsupported weight file version");
        std::vector<LayerSpec> specs;
        for (const auto& s : j.at("layer_specs")) {
            LayerSpec spec;
            spec.kind = layer_kind_from_string(s.at("kind").get<std::string>());
            spec.units = s.value("units", 0);
            spec.rate = s.value("rate", 0.0);
            if (spec.kind == LayerKind::reshape) spec.target = shape_from_json(s.at("target"));
            specs.push_back(spec);
        }
        Model m(shape_from_json(j.at("input_shape")), specs);
        const auto& params = j.at("parameters");
        if (params.size() != m.layers_.size()) throw FormatError("parameter list length differs from layer count");
        for (std::size_t i = 0; i < m.layers_.size(); ++i) {
            auto w = params[i].at("weight").get<std::vector<double>>();
            auto b = params[i].at("bias").get<std::vector<double>>();
            if (w.size() != m.layers_[i].weight.size() || b.size() != m.layers_[i].bias.size()) {
                throw ShapeMismatch("parameter tensor size differs from layer spec");
            }
            m.layers_[i].weight = std::move(w);
            m.layers_[i].bias = std::move(b);
        }
        m.reset_optimizer();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad weight file: ") + e.what());
    }
}

ForwardPass forward_pass(const Model& model, const Matrix& input, bool training, Rng* rng, std::size_t begin,
                         std::size_t end) {
    const auto& layers = model.layers();
    end = std::min(end, layers.size());
    if (begin > end) throw ShapeMismatch("empty or reversed layer range");
    const Shape expected = begin == 0 ? model.input_shape() : layers[begin].in;
    if (input.cols != expected.size()) {
        throw ShapeMismatch("input width " + std::to_string(input.cols) + " does not match expected " +
                            std::to_string(expected.size()));
    }
    ForwardPass pass;
    pass.begin = begin;
    pass.end = end;
    pass.training = training;
    pass.activations.reserve(end - begin + 1);
    pass.aux.resize(end - begin);
    pass.activations.push_back(input);
    for (std::size_t li = begin; li < end; ++li) {
        pass.activations.push_back(
            forward_layer(layers[li], pass.activations.back(), training, rng, pass.aux[li - begin]));
    }
    return pass;
}

Matrix forward(const Model& model, const Matrix& input, std::size_t begin, std::size_t end) {
    return forward_pass(model, input, false, nullptr, begin, end).output();
}

Matrix forward(const Model& model, const Matrix& input, bool training, Rng& rng) {
    return forward_pass(model, input, training, &rng).output();
}

double compute_loss(const Matrix& output, const Matrix& target, Loss loss) {
    if (output.rows != target.rows || output.cols != target.cols) throw ShapeMismatch("loss operands differ in shape");
    if (output.data.empty()) return 0.0;
    double total = 0.0;
    if (loss == Loss::mse) {
        for (std::size_t i = 0; i < output.data.size(); ++i) {
            const double d = output.data[i] - target.data[i];
            total += d * d;
        }
        return total / static_cast<double>(output.data.size());
    }
    for (std::size_t i = 0; i < output.data.size(); ++i) {
        if (target.data[i] != 0.0) total -= target.data[i] * std::log(std::max(output.data[i], 1e-300));
    }
    return total / static_cast<double>(output.rows);
}

Gradients backward(const Model& model, const ForwardPass& pass, const Matrix& target, Loss loss) {
    Gradients g;
    const auto& layers = model.layers();
    g.weight.resize(layers.size());
    g.bias.resize(layers.size());
    for (std::size_t li = pass.begin; li < pass.end; ++li) {
        g.weight[li].assign(layers[li].weight.size(), 0.0);
        g.bias[li].assign(layers[li].bias.size(), 0.0);
    }
    run_backward(model, pass, target, loss, &g);
    return g;
}

Matrix input_gradient(const Model& model, const ForwardPass& pass, const Matrix& target, Loss loss) {
    Gradients scratch;
    scratch.weight.resize(model.layers().size());
    scratch.bias.resize(model.layers().size());
    for (std::size_t li = pass.begin; li < pass.end; ++li) {
        scratch.weight[li].assign(model.layers()[li].weight.size(), 0.0);
        scratch.bias[li].assign(model.layers()[li].bias.size(), 0.0);
    }
    return run_backward(model, pass, target, loss, &scratch);
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (batch_size < 1) throw ValidationError("batch size must be at least 1");
    if (epochs < 0) throw ValidationError("epochs must be non-negative");
}

void adam_step(Model& model, const Gradients& grads, const TrainConfig& config) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    auto& layers = model.layers();
    if (grads.weight.size() != layers.size() || grads.bias.size() != layers.size()) {
        throw ShapeMismatch("gradient list does not match model layers");
    }
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const bool w_ok = grads.weight[li].empty() || grads.weight[li].size() == layers[li].weight.size();
        const bool b_ok = grads.bias[li].empty() || grads.bias[li].size() == layers[li].bias.size();
        if (!w_ok || !b_ok) throw ShapeMismatch("gradient tensor shape differs from parameter");
        for (double g : grads.weight[li]) {
            if (!std::isfinite(g)) throw NonFiniteGradient("non-finite weight gradient");
        }
        for (double g : grads.bias[li]) {
            if (!std::isfinite(g)) throw NonFiniteGradient("non-finite bias gradient");
        }
    }

    const auto t = static_cast<double>(model.advance_optimizer_step());
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    const double lr = config.learning_rate;
    auto update = [&](std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                      const std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    };
    for (std::size_t li = 0; li < layers.size(); ++li) {
        auto& l = layers[li];
        update(l.weight, l.weight_m, l.weight_v, grads.weight[li]);
        update(l.bias, l.bias_m, l.bias_v, grads.bias[li]);
    }
}

std::vector<std::size_t> epoch_order(std::span<const int> labels, std::size_t n, bool oversample, Rng& rng) {
    std::vector<std::size_t> order;
    if (!oversample) {
        order.resize(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order.begin(), order.end());
        return order;
    }
    if (labels.size() != n) throw ShapeMismatch("oversampling needs one label per row");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
    const std::size_t k = by_class.size();
    std::size_t slot = 0;
    order.reserve(n);
    for (const auto& [cls, members] : by_class) {
        const std::size_t share = n / k + (slot < n % k ? 1 : 0);
        for (std::size_t j = 0; j < share; ++j) order.push_back(members[rng.below(members.size())]);
        ++slot;
    }
    rng.shuffle(order.begin(), order.end());
    return order;
}

std::vector<double> train(Model& model, const TrainSet& data, const TrainConfig& config) {
    config.validate();
    const std::size_t n = data.inputs.rows;
    if (n == 0) throw EmptyDataset("training set is empty");
    if (data.targets.rows != n) throw ShapeMismatch("inputs and targets differ in row count");
    if (data.targets.cols != model.output_shape().size()) throw ShapeMismatch("target width differs from model output");

    Rng rng(config.seed);
    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = epoch_order(data.labels, n, config.oversample, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            Matrix x(stop - start, data.inputs.cols);
            Matrix y(stop - start, data.targets.cols);
            for (std::size_t r = start; r < stop; ++r) {
                std::ranges::copy(data.inputs.row(order[r]), x.row(r - start).begin());
                std::ranges::copy(data.targets.row(order[r]), y.row(r - start).begin());
            }
            const ForwardPass pass = forward_pass(model, x, true, &rng);
            epoch_loss += compute_loss(pass.output(), y, config.loss) * static_cast<double>(stop - start);
            adam_step(model, backward(model, pass, y, config.loss), config);
        }
        history.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return history;
}

}  // namespace graspcount::nn
