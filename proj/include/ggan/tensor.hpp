#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace ggan {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Graph;

/// Dense row-major float32 tensor. Tensors created by graph operations carry
/// a node id into the recording graph; leaves (constants, parameters) have
/// node == -1.
struct TensorData {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until a backward pass touches it
    int node = -1;
    bool requires_grad = false;

    void zero_grad();
    void accumulate_grad(const std::vector<float>& g);
    float scalar() const;  // value of a single-element tensor
};

using Tensor = std::shared_ptr<TensorData>;

Tensor make_tensor(Shape shape, std::vector<float> data);
Tensor make_param(Shape shape, std::vector<float> data);
Tensor zeros(const Shape& shape);
Tensor full(const Shape& shape, float value);
Tensor scalar_tensor(float value);

/// Per-layer batchnorm running statistics.
struct BatchNormState {
    std::vector<float> running_mean;
    std::vector<float> running_var;  // biased (1/B) variance
    float momentum = 0.1f;
    bool initialized = false;
};

struct OpRecord {
    std::string kind;
    std::vector<Tensor> inputs;
    std::weak_ptr<TensorData> output;
    // Raw backward: accumulate d(loss)/d(input) into the per-input buffers.
    // A null buffer pointer means that input does not need a gradient.
    std::function<void(const std::vector<float>& gout,
                       std::vector<std::vector<float>*>& gin)> vjp;
    // Symbolic backward for the double-backprop op set: emits the gradient
    // computation as recorded tensors. Null for unsupported ops. Entries in
    // the returned vector may be null for inputs the gradient does not flow
    // into on the input-gradient path (weights, biases).
    std::function<std::vector<Tensor>(Graph&, const Tensor& gout)> sym_vjp;
};

/// Recording tape. All differentiable operations go through a Graph; backward
/// walks the tape in reverse. Single-threaded per graph.
class Graph {
public:
    explicit Graph(std::uint64_t seed = 0);

    std::mt19937& rng() { return rng_; }

    // elementwise (equal shapes, or b a single-element tensor)
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, float s);
    Tensor add_scalar(const Tensor& a, float s);

    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);
    Tensor add_bias(const Tensor& x, const Tensor& b);  // B×N + [N], or B×C×T + [C]

    // conv ops take C×T or B×C×T input; weight Cout×Cin×K (conv) or
    // Cin×Cout×K (transposed). Convention is cross-correlation.
    Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
                  int stride, int padding);
    Tensor conv1d_transposed(const Tensor& x, const Tensor& w, const Tensor& b,
                             int stride);
    Tensor maxpool1d(const Tensor& x, int window);

    Tensor relu(const Tensor& x);
    Tensor leaky_relu(const Tensor& x, float slope);
    Tensor sigmoid(const Tensor& x);
    Tensor log(const Tensor& x);  // natural log; requires strictly positive input
    Tensor log_softmax(const Tensor& x);  // rows of B×C
    Tensor sqrt(const Tensor& x);

    Tensor dropout(const Tensor& x, float p, bool training);
    Tensor batchnorm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                     BatchNormState& state, bool training, float eps = 1e-5f);
    Tensor nll_loss(const Tensor& log_probs, const std::vector<int>& labels);

    Tensor reshape(const Tensor& x, Shape shape);
    Tensor concat_channels(const Tensor& a, const Tensor& b);  // along C of B×C×T
    Tensor crop_time(const Tensor& x, int offset, int length);
    Tensor pad_time_reflect(const Tensor& x, int left, int right);

    Tensor sum_all(const Tensor& x);
    Tensor mean_all(const Tensor& x);
    Tensor sum_rows(const Tensor& x);  // B×N -> B

    /// Reverse-topological accumulation of gradients into requires_grad
    /// leaves. Calling twice without zero_grad accumulates.
    void backward(const Tensor& loss);

    /// Builds d(out)/d(wrt) as a recorded computation so it can itself be
    /// differentiated (used by the gradient penalty). Supported ops only.
    Tensor input_gradient(const Tensor& out, const Tensor& wrt);

    std::size_t num_records() const { return records_.size(); }

private:
    friend struct OpRecord;
    Tensor emit(OpRecord rec, Shape out_shape, std::vector<float> out_data);
    Tensor conv1d_adjoint_(const Tensor& g, const Tensor& w, int stride,
                           int padding, int Tin);
    Tensor maxpool_scatter_(const Tensor& g,
                            const std::shared_ptr<std::vector<int>>& argmax,
                            const Shape& in_shape);
    std::vector<OpRecord> records_;
    std::mt19937 rng_;
};

/// Thrown when an operation produces or receives NaN/Inf.
struct NumericsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check_finite(const std::vector<float>& v, const std::string& what);

}  // namespace ggan
