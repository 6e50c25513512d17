#include "cbc/layers.hpp"

#include <algorithm>
#include <random>

#include "cbc/errors.hpp"

namespace cbc {
namespace {

void require_cache(bool has_cache, const char* who) {
    if (!has_cache)
        throw StateError(std::string(who) + ": backward called before forward");
}

nlohmann::json json_array(std::span<const double> values) {
    nlohmann::json arr = nlohmann::json::array();
    for (double v : values) arr.push_back(v);
    return arr;
}

void load_array(const nlohmann::json& j, std::span<double> out, const char* field) {
    if (!j.is_array() || j.size() != out.size())
        throw ConfigError(std::string("checkpoint field '") + field + "' has wrong length");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = j[i].get<double>();
}

Tensor4 add_tensors(const Tensor4& a, const Tensor4& b) {
    if (!(a.dims() == b.dims()))
        throw ShapeError("residual add: branch shapes disagree");
    Tensor4 out(a.dims());
    const auto av = a.values();
    const auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    return out;
}

}  // namespace

// ---------------------------------------------------------------- hybrid conv

nlohmann::json HybridConvNode::state_json() const {
    nlohmann::json j;
    j["cbc"] = json_array(layer_.cbc_values());
    j["std"] = json_array(layer_.std_values());
    j["bias"] = json_array(layer_.bias());
    return j;
}

void HybridConvNode::load_state(const nlohmann::json& j) {
    load_array(j.at("cbc"), layer_.cbc_values(), "cbc");
    load_array(j.at("std"), layer_.std_values(), "std");
    load_array(j.at("bias"), layer_.bias(), "bias");
}

// ----------------------------------------------------------------------- relu

Tensor4 ReluNode::forward(const Tensor4& input, bool) {
    cached_input_ = input;
    has_cache_ = true;
    return relu_forward(input);
}

Tensor4 ReluNode::backward(const Tensor4& grad_out) {
    require_cache(has_cache_, "relu");
    return relu_backward(cached_input_, grad_out);
}

// -------------------------------------------------------------------- maxpool

Tensor4 MaxPoolNode::forward(const Tensor4& input, bool) {
    input_dims_ = input.dims();
    MaxPoolResult res = maxpool2x2_forward(input);
    argmax_ = std::move(res.argmax);
    has_cache_ = true;
    return std::move(res.output);
}

Tensor4 MaxPoolNode::backward(const Tensor4& grad_out) {
    require_cache(has_cache_, "maxpool");
    return maxpool2x2_backward(input_dims_, argmax_, grad_out);
}

// ------------------------------------------------------------ global avg pool

Tensor4 GlobalAvgPoolNode::forward(const Tensor4& input, bool) {
    input_dims_ = input.dims();
    has_cache_ = true;
    return global_avg_pool_forward(input);
}

Tensor4 GlobalAvgPoolNode::backward(const Tensor4& grad_out) {
    require_cache(has_cache_, "global_avg_pool");
    return global_avg_pool_backward(input_dims_, grad_out);
}

// ----------------------------------------------------------------- batch norm

BatchNormNode::BatchNormNode(std::size_t channels, double eps, double momentum)
    : eps_(eps),
      momentum_(momentum),
      gamma_(channels, 1.0),
      beta_(channels, 0.0),
      gamma_grad_(channels, 0.0),
      beta_grad_(channels, 0.0),
      running_mean_(channels, 0.0),
      running_var_(channels, 1.0) {
    if (channels == 0) throw ShapeError("batchnorm: channels must be positive");
}

Tensor4 BatchNormNode::forward(const Tensor4& input, bool training) {
    if (input.dims().c != channels())
        throw ShapeError("batchnorm: input channel count mismatch");
    if (!training)
        return batchnorm_forward_eval(input, gamma_, beta_, running_mean_, running_var_, eps_);
    cached_input_ = input;
    Tensor4 out = batchnorm_forward_train(input, gamma_, beta_, eps_, momentum_, running_mean_,
                                          running_var_, cache_);
    has_cache_ = true;
    return out;
}

Tensor4 BatchNormNode::backward(const Tensor4& grad_out) {
    require_cache(has_cache_, "batchnorm");
    BatchNormGrads grads = batchnorm_backward(cached_input_, gamma_, cache_, grad_out);
    // written in place: collected grad spans must stay valid across steps
    std::copy(grads.gamma.begin(), grads.gamma.end(), gamma_grad_.begin());
    std::copy(grads.beta.begin(), grads.beta.end(), beta_grad_.begin());
    return std::move(grads.input);
}

void BatchNormNode::collect_params(std::vector<ParamSlice>& out) {
    out.push_back({std::span<double>(gamma_), std::span<double>(gamma_grad_)});
    out.push_back({std::span<double>(beta_), std::span<double>(beta_grad_)});
}

nlohmann::json BatchNormNode::state_json() const {
    nlohmann::json j;
    j["gamma"] = json_array(gamma_);
    j["beta"] = json_array(beta_);
    j["running_mean"] = json_array(running_mean_);
    j["running_var"] = json_array(running_var_);
    return j;
}

void BatchNormNode::load_state(const nlohmann::json& j) {
    load_array(j.at("gamma"), gamma_, "gamma");
    load_array(j.at("beta"), beta_, "beta");
    load_array(j.at("running_mean"), running_mean_, "running_mean");
    load_array(j.at("running_var"), running_var_, "running_var");
}

// ---------------------------------------------------------------------- dense

DenseNode::DenseNode(std::size_t in_features, std::size_t units, std::uint64_t seed)
    : weights_(units, in_features, 1, 1),
      weight_grads_(units, in_features, 1, 1),
      bias_(units, 0.0),
      bias_grads_(units, 0.0) {
    std::mt19937_64 rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(in_features + units));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : weights_.values()) w = dist(rng);
    weight_grads_.fill(0.0);
}

Tensor4 DenseNode::forward(const Tensor4& input, bool) {
    cached_input_ = input;
    has_cache_ = true;
    return dense_forward(input, weights_, bias_);
}

Tensor4 DenseNode::backward(const Tensor4& grad_out) {
    require_cache(has_cache_, "dense");
    DenseGrads grads = dense_backward(cached_input_, weights_, grad_out);
    // written in place: collected grad spans must stay valid across steps
    std::copy(grads.weights.values().begin(), grads.weights.values().end(),
              weight_grads_.values().begin());
    std::copy(grads.bias.begin(), grads.bias.end(), bias_grads_.begin());
    return std::move(grads.input);
}

void DenseNode::collect_params(std::vector<ParamSlice>& out) {
    out.push_back({weights_.values(), weight_grads_.values()});
    out.push_back({std::span<double>(bias_), std::span<double>(bias_grads_)});
}

nlohmann::json DenseNode::state_json() const {
    nlohmann::json j;
    j["weights"] = json_array(weights_.values());
    j["bias"] = json_array(bias_);
    return j;
}

void DenseNode::load_state(const nlohmann::json& j) {
    load_array(j.at("weights"), weights_.values(), "weights");
    load_array(j.at("bias"), bias_, "bias");
}

// ------------------------------------------------------------- residual block

ResidualBlockNode::ResidualBlockNode(std::vector<std::unique_ptr<Layer>> main_path,
                                     std::vector<std::unique_ptr<Layer>> shortcut)
    : main_path_(std::move(main_path)), shortcut_(std::move(shortcut)) {
    if (main_path_.empty()) throw StateError("residual block: empty main path");
}

Tensor4 ResidualBlockNode::forward(const Tensor4& input, bool training) {
    Tensor4 main = input;
    for (auto& node : main_path_) main = node->forward(main, training);
    Tensor4 sum;
    if (shortcut_.empty()) {
        sum = add_tensors(main, input);
    } else {
        Tensor4 side = input;
        for (auto& node : shortcut_) side = node->forward(side, training);
        sum = add_tensors(main, side);
    }
    cached_sum_ = sum;
    has_cache_ = true;
    return relu_forward(sum);
}

Tensor4 ResidualBlockNode::backward(const Tensor4& grad_out) {
    require_cache(has_cache_, "residual_block");
    Tensor4 grad_sum = relu_backward(cached_sum_, grad_out);
    Tensor4 grad_main = grad_sum;
    for (auto it = main_path_.rbegin(); it != main_path_.rend(); ++it)
        grad_main = (*it)->backward(grad_main);
    if (shortcut_.empty()) return add_tensors(grad_main, grad_sum);
    Tensor4 grad_side = grad_sum;
    for (auto it = shortcut_.rbegin(); it != shortcut_.rend(); ++it)
        grad_side = (*it)->backward(grad_side);
    return add_tensors(grad_main, grad_side);
}

void ResidualBlockNode::collect_params(std::vector<ParamSlice>& out) {
    for (auto& node : main_path_) node->collect_params(out);
    for (auto& node : shortcut_) node->collect_params(out);
}

nlohmann::json ResidualBlockNode::state_json() const {
    nlohmann::json main = nlohmann::json::array();
    for (const auto& node : main_path_) main.push_back(node->state_json());
    nlohmann::json side = nlohmann::json::array();
    for (const auto& node : shortcut_) side.push_back(node->state_json());
    return nlohmann::json{{"main", std::move(main)}, {"shortcut", std::move(side)}};
}

void ResidualBlockNode::load_state(const nlohmann::json& j) {
    const auto& main = j.at("main");
    const auto& side = j.at("shortcut");
    if (!main.is_array() || main.size() != main_path_.size() || !side.is_array() ||
        side.size() != shortcut_.size())
        throw ConfigError("checkpoint: residual block layout mismatch");
    for (std::size_t i = 0; i < main_path_.size(); ++i) main_path_[i]->load_state(main[i]);
    for (std::size_t i = 0; i < shortcut_.size(); ++i) shortcut_[i]->load_state(side[i]);
}

}  // namespace cbc
