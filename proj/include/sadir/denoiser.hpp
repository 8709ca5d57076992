#pragma once

// Conditional epsilon-prediction network over 3-channel velocity fields.
//
// Input is the 6-channel stack [y_tau (3), atlas, embedded slices, slice mask].
// A 3x3x3 stem lifts it to C channels, R residual blocks follow, each
//     conv -> ELU -> FiLM(tau) -> conv -> squeeze-excitation gate -> + skip,
// and a GELU(tanh) + 3x3x3 head maps back to 3 channels. Convolutions use
// clamp-to-edge padding. The head is zero-initialized so a fresh network
// predicts eps_hat = 0.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sadir/diffusion.hpp"
#include "sadir/grid.hpp"

namespace sadir {

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

struct DenoiserConfig {
    int channels = 16;    // C
    int blocks = 4;       // R
    int embed_dim = 32;   // E, even
    int se_reduction = 4; // r
    // Diffusion runs on latent_scale * L^(1/2) v; the pipeline owns the mapping.
    double latent_scale = 1.0;
};

class DenoiserParams {
public:
    DenoiserParams() = default;

    // Random initialization (head zeroed). Throws ParameterError on bad config.
    static DenoiserParams init(const DenoiserConfig &cfg, Rng &rng);
    // Rebuilds from named tensors; throws FormatError on missing/misshapen ones.
    static DenoiserParams from_tensors(const DenoiserConfig &cfg, std::vector<Tensor> tensors);

    DenoiserParams zeros_like() const;

    const DenoiserConfig &config() const { return config_; }
    // Throws ParameterError unless the scale is positive and finite.
    void set_latent_scale(double scale);
    std::vector<Tensor> &tensors() { return tensors_; }
    const std::vector<Tensor> &tensors() const { return tensors_; }

    Tensor &get(std::string_view name);
    const Tensor &get(std::string_view name) const;

    std::size_t parameter_count() const;
    bool all_finite() const;

private:
    DenoiserConfig config_;
    std::vector<Tensor> tensors_;
};

// Activations saved by a recording forward pass.
struct DenoiserTape {
    bool recorded = false;
    GridSpec grid;
    int tau = 0;
    std::vector<double> input;  // 6 * n
    std::vector<double> embed;  // E
    std::vector<double> t_pre;  // E, before ELU
    std::vector<double> t_act;  // E
    std::vector<double> film;   // 2 * C * R
    std::vector<std::vector<double>> h;  // R + 1 residual stream states, C * n each
    struct Block {
        std::vector<double> a1, a2, a3, a4; // conv1 out, ELU, FiLM, conv2 out
        std::vector<double> pooled, z1, gate;
    };
    std::vector<Block> blocks;
    std::vector<double> head_in; // GELU(h_R)
};

VectorField denoiser_forward(const DenoiserParams &params, const VectorField &y_tau, int tau,
                             const ConditioningPack &cond, DenoiserTape *tape = nullptr);

struct DenoiserGrads {
    DenoiserParams params; // same layout as the network parameters
    VectorField d_y_tau;
};

// Throws UsageError when the tape was not recorded.
DenoiserGrads denoiser_backward(const DenoiserParams &params, const DenoiserTape &tape, const VectorField &d_eps_hat);

EpsPredictor as_predictor(const DenoiserParams &params);

// params <- params - lr * (grads + weight_decay * params)
void sgd_step(DenoiserParams &params, const DenoiserParams &grads, double lr, double weight_decay = 0.0);

class AdamOptimizer {
public:
    explicit AdamOptimizer(const DenoiserParams &like, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(DenoiserParams &params, const DenoiserParams &grads, double lr, double weight_decay = 0.0);
    long steps_taken() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Cosine annealing from base_lr at step 0 to min_lr at total_steps.
double cosine_lr(double base_lr, long step, long total_steps, double min_lr = 0.0);

namespace nn {

double elu(double x);
double elu_grad(double x);
double gelu_tanh(double x);
double gelu_tanh_grad(double x);

// in: cin blocks of n; w: [cout][cin][27] with tap k = kx + 3 (ky + 3 kz);
// out: cout blocks of n.
void conv3d_forward(std::span<const double> in, int cin, std::span<const double> w, std::span<const double> b,
                    int cout, const GridSpec &g, std::span<double> out);
// Accumulates into d_w and d_b; d_in is overwritten unless empty.
void conv3d_backward(std::span<const double> in, int cin, std::span<const double> w, int cout, const GridSpec &g,
                     std::span<const double> d_out, std::span<double> d_in, std::span<double> d_w,
                     std::span<double> d_b);

// Squeeze-excitation: pooled = mean_v(x); z1 = W1 pooled + b1;
// gate = sigmoid(W2 relu(z1) + b2); out = x * gate (per channel).
struct SeCache {
    std::vector<double> pooled, z1, gate;
};
void se_forward(std::span<const double> x, int channels, std::size_t n, std::span<const double> w1,
                std::span<const double> b1, std::span<const double> w2, std::span<const double> b2, int hidden,
                std::span<double> out, SeCache &cache);
// d_x overwritten; parameter gradients accumulated.
void se_backward(std::span<const double> x, int channels, std::size_t n, std::span<const double> w1,
                 std::span<const double> w2, int hidden, const SeCache &cache, std::span<const double> d_out,
                 std::span<double> d_x, std::span<double> d_w1, std::span<double> d_b1, std::span<double> d_w2,
                 std::span<double> d_b2);

std::vector<double> time_embedding(int tau, int dim);

} // namespace nn

} // namespace sadir
