#pragma once

#include <cstddef>
#include <vector>

namespace contcl {

// Dense row-major 64-bit float tensor of rank 1 or 2. Rank-1 tensors are
// treated as a single row by the row-wise operations.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor row(std::vector<double> v);
    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool is_scalar() const { return data_.size() == 1; }

    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : size(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

    const std::vector<double>& values() const { return data_; }
    std::vector<double>& values() { return data_; }
    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Elementwise kernels; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // throws std::domain_error on non-positive entries

// matmul: {m,k} x {k,n} -> {m,n}. The _nt/_tn variants multiply with the
// second/first operand transposed and exist for backward passes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a {m,k} x b {n,k} -> {m,n}
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a {k,m} x b {k,n} -> {m,n}

// Rows rescaled to unit L2 norm; throws std::domain_error on a zero row.
Tensor row_l2_normalize(const Tensor& a);

double sum(const Tensor& a);
double mean(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);  // full contraction, same shape
double frobenius_norm(const Tensor& a);

Tensor concat_rows(const std::vector<Tensor>& parts);

// Numerically stable per-row softmax cross-entropy.
// logits {B,C} (rank-1 treated as one row), one label per row.
// Returns loss {B,1} and writes softmax probabilities to *probs if non-null.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             Tensor* probs = nullptr);

}  // namespace contcl
