#include "contcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "contcl/errors.hpp"

namespace contcl {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw shape_error(std::string(op) + ": shape mismatch");
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
    if (shape_.empty() || shape_.size() > 2) {
        throw shape_error("Tensor: rank must be 1 or 2");
    }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty() || shape_.size() > 2) {
        throw shape_error("Tensor: rank must be 1 or 2");
    }
    if (data_.size() != shape_product(shape_)) {
        throw shape_error("Tensor: buffer length does not match shape");
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::row(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor scalar_mul(const Tensor& a, double c) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return out;
}

Tensor tanh(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return out;
}

Tensor exp(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return out;
}

Tensor log(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] <= 0.0) throw std::domain_error("log: non-positive input");
        out[i] = std::log(out[i]);
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw shape_error("matmul: incompatible shapes");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * n;
        const double* arow = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw shape_error("matmul_nt: incompatible shapes");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        double* orow = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            orow[j] = acc;
        }
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
        throw shape_error("matmul_tn: incompatible shapes");
    }
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    Tensor out({m, n});
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a.data() + p * m;
        const double* brow = b.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor row_l2_normalize(const Tensor& a) {
    Tensor out = a;
    const std::size_t r = a.rows(), c = a.cols();
    for (std::size_t i = 0; i < r; ++i) {
        double* row = out.data() + i * c;
        double sq = 0.0;
        for (std::size_t j = 0; j < c; ++j) sq += row[j] * row[j];
        if (sq == 0.0) throw std::domain_error("row_l2_normalize: zero row");
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t j = 0; j < c; ++j) row[j] *= inv;
    }
    return out;
}

double sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    return acc;
}

double mean(const Tensor& a) {
    if (a.empty()) throw shape_error("mean: empty tensor");
    return sum(a) / static_cast<double>(a.size());
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw shape_error("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double frobenius_norm(const Tensor& a) {
    double sq = 0.0;
    for (double v : a.values()) sq += v * v;
    return std::sqrt(sq);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw shape_error("concat_rows: no inputs");
    const std::size_t c = parts.front().cols();
    std::size_t r = 0;
    for (const Tensor& p : parts) {
        if (p.cols() != c) throw shape_error("concat_rows: column mismatch");
        r += p.rows();
    }
    Tensor out({r, c});
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        std::copy(p.values().begin(), p.values().end(), out.data() + offset);
        offset += p.size();
    }
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             Tensor* probs) {
    const std::size_t b = logits.rows(), c = logits.cols();
    if (labels.size() != b) {
        throw shape_error("softmax_cross_entropy: one label per row required");
    }
    if (c == 0) throw shape_error("softmax_cross_entropy: empty logits");
    Tensor loss({b, 1});
    Tensor p({b, c});
    for (std::size_t i = 0; i < b; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw input_error("softmax_cross_entropy: label out of range");
        }
        const double* row = logits.data() + i * c;
        double m = row[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
        const double lse = m + std::log(z);
        loss(i, 0) = lse - row[static_cast<std::size_t>(y)];
        for (std::size_t j = 0; j < c; ++j) p(i, j) = std::exp(row[j] - lse);
    }
    if (probs) *probs = std::move(p);
    return loss;
}

}  // namespace contcl
