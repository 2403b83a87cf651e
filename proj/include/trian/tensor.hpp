#ifndef TRIAN_TENSOR_HPP
#define TRIAN_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "trian/error.hpp"
#include "trian/rng.hpp"

namespace trian {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// Boolean mask over positions; not differentiable, never on the tape.
struct BoolMask {
  Shape shape;
  std::vector<uint8_t> v;

  int64_t numel() const { return shape_numel(shape); }
};

// Integer index array for embedding lookups.
struct IndexArray {
  Shape shape;
  std::vector<int32_t> v;

  int64_t numel() const { return shape_numel(shape); }
};

template <typename T>
struct TensorDataT {
  Shape shape;
  std::vector<T> v;
  std::vector<T> g;  // empty until first touched
  bool requires_grad = false;
};

// Dense array handle with reverse-mode gradients. Copies share storage.
template <typename T>
class TensorT {
 public:
  using Data = TensorDataT<T>;

  TensorT() = default;

  static TensorT zeros(Shape shape) {
    TensorT t;
    t.d_ = std::make_shared<Data>();
    t.d_->shape = std::move(shape);
    t.d_->v.assign(static_cast<size_t>(shape_numel(t.d_->shape)), T(0));
    return t;
  }

  static TensorT full(Shape shape, T value) {
    TensorT t = zeros(std::move(shape));
    std::fill(t.d_->v.begin(), t.d_->v.end(), value);
    return t;
  }

  static TensorT scalar(T value) { return full(Shape{}, value); }

  static TensorT from(Shape shape, std::vector<T> values) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw ShapeError("tensor: " + shape_str(shape) + " does not hold " +
                       std::to_string(values.size()) + " values");
    TensorT t;
    t.d_ = std::make_shared<Data>();
    t.d_->shape = std::move(shape);
    t.d_->v = std::move(values);
    return t;
  }

  template <typename U>
  static TensorT from_other(Shape shape, const std::vector<U>& values) {
    std::vector<T> conv(values.begin(), values.end());
    return from(std::move(shape), std::move(conv));
  }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return shape_numel(d_->shape); }

  std::vector<T>& values() { return d_->v; }
  const std::vector<T>& values() const { return d_->v; }

  bool requires_grad() const { return d_ && d_->requires_grad; }
  TensorT& set_requires_grad(bool b) {
    d_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return d_ && !d_->g.empty(); }
  std::vector<T>& grad() {
    ensure_grad();
    return d_->g;
  }
  const std::vector<T>& grad() const { return d_->g; }

  void ensure_grad() {
    if (d_->g.empty()) d_->g.assign(d_->v.size(), T(0));
  }

  void zero_grad() {
    if (!d_->g.empty()) std::fill(d_->g.begin(), d_->g.end(), T(0));
  }

  T item() const {
    if (numel() != 1)
      throw ShapeError("item: tensor " + shape_str(shape()) + " is not scalar");
    return d_->v[0];
  }

  T at(std::initializer_list<int> idx) const {
    int64_t flat = 0;
    size_t k = 0;
    for (int i : idx) flat = flat * d_->shape[k++] + i;
    return d_->v[static_cast<size_t>(flat)];
  }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (auto& x : d_->v) x = static_cast<T>(rng.uniform(lo, hi));
  }

  void fill_normal(Rng& rng, double mean, double stddev) {
    for (auto& x : d_->v) x = static_cast<T>(rng.normal(mean, stddev));
  }

  std::shared_ptr<Data> ptr() const { return d_; }

 private:
  std::shared_ptr<Data> d_;
};

// Ordered record of executed ops; replaying it in reverse propagates adjoints.
// The most recently constructed tape on a thread is the active one; ops only
// record when a tape is active and some input requires gradients.
template <typename T>
class TapeT {
 public:
  TapeT() : prev_(active_) { active_ = this; }
  ~TapeT() { active_ = prev_; }

  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT* active() { return active_; }

  static TapeT* exchange(TapeT* t) {
    TapeT* old = active_;
    active_ = t;
    return old;
  }

  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  size_t node_count() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays nodes in reverse execution order.
  // Gradients accumulate across calls until explicitly zeroed.
  void backward(TensorT<T> loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
      throw ContractError("backward: loss is not on the active tape");
    loss.grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  static inline thread_local TapeT* active_ = nullptr;
  TapeT* prev_ = nullptr;
  std::vector<std::function<void()>> nodes_;
};

// Disables tape recording for its scope (pure forward evaluation).
template <typename T>
class NoGradT {
 public:
  NoGradT() : saved_(TapeT<T>::exchange(nullptr)) {}
  ~NoGradT() { TapeT<T>::exchange(saved_); }

 private:
  TapeT<T>* saved_;
};

namespace detail {

template <typename T>
bool tracing(std::initializer_list<const TensorT<T>*> inputs) {
  if (TapeT<T>::active() == nullptr) return false;
  for (auto* t : inputs)
    if ((*t).requires_grad()) return true;
  return false;
}

template <typename T>
void record(TensorT<T>& out, std::function<void()> fn) {
  out.set_requires_grad(true);
  TapeT<T>::active()->record(std::move(fn));
}

// C(m x n) += A(m x k) * B(k x n), row-major.
template <typename T>
void mm_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    T* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      T av = arow[p];
      const T* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* a, int rows, int cols) {
  std::vector<T> out(static_cast<size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out[static_cast<size_t>(j) * rows + i] = a[static_cast<size_t>(i) * cols + j];
  return out;
}

// Resolves one matmul operand: materializes the transpose when flagged.
template <typename T>
void effective(const std::vector<T>& v, int rows, int cols, bool trans,
               std::vector<T>& storage, const T*& out, int& out_rows, int& out_cols) {
  if (trans) {
    storage = transposed(v.data(), rows, cols);
    out = storage.data();
    out_rows = cols;
    out_cols = rows;
  } else {
    out = v.data();
    out_rows = rows;
    out_cols = cols;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul / bmm
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b, bool trans_a = false,
                  bool trans_b = false) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expected rank-2 tensors, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  int am = trans_a ? a.dim(1) : a.dim(0);
  int ak = trans_a ? a.dim(0) : a.dim(1);
  int bk = trans_b ? b.dim(1) : b.dim(0);
  int bn = trans_b ? b.dim(0) : b.dim(1);
  if (ak != bk)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                     (trans_a ? "^T" : "") + " vs " + shape_str(b.shape()) +
                     (trans_b ? "^T" : ""));

  auto out = TensorT<T>::zeros({am, bn});
  {
    std::vector<T> sa, sb;
    const T *pa, *pb;
    int r, c;
    detail::effective(a.values(), a.dim(0), a.dim(1), trans_a, sa, pa, r, c);
    detail::effective(b.values(), b.dim(0), b.dim(1), trans_b, sb, pb, r, c);
    detail::mm_acc(pa, pb, out.values().data(), am, ak, bn);
  }

  if (detail::tracing<T>({&a, &b})) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    detail::record(out, [ad, bd, od, trans_a, trans_b, am, ak, bn]() {
      const std::vector<T>& g = od->g;
      // dA' = g * B'^T ; dB' = A'^T * g, with A' = op(A), B' = op(B).
      if (ad->requires_grad) {
        std::vector<T> sb;
        const T* pb;
        int r, c;
        detail::effective(bd->v, bd->shape[0], bd->shape[1], !trans_b, sb, pb, r, c);
        if (ad->g.empty()) ad->g.assign(ad->v.size(), T(0));
        if (!trans_a) {
          detail::mm_acc(g.data(), pb, ad->g.data(), am, bn, ak);
        } else {
          std::vector<T> tmp(static_cast<size_t>(am) * ak, T(0));
          detail::mm_acc(g.data(), pb, tmp.data(), am, bn, ak);
          auto tt = detail::transposed(tmp.data(), am, ak);
          for (size_t i = 0; i < tt.size(); ++i) ad->g[i] += tt[i];
        }
      }
      if (bd->requires_grad) {
        std::vector<T> sa;
        const T* pa;
        int r, c;
        detail::effective(ad->v, ad->shape[0], ad->shape[1], !trans_a, sa, pa, r, c);
        // pa is A'^T with shape [ak x am]
        if (bd->g.empty()) bd->g.assign(bd->v.size(), T(0));
        if (!trans_b) {
          detail::mm_acc(pa, g.data(), bd->g.data(), ak, am, bn);
        } else {
          std::vector<T> tmp(static_cast<size_t>(ak) * bn, T(0));
          detail::mm_acc(pa, g.data(), tmp.data(), ak, am, bn);
          auto tt = detail::transposed(tmp.data(), ak, bn);
          for (size_t i = 0; i < tt.size(); ++i) bd->g[i] += tt[i];
        }
      }
    });
  }
  return out;
}

// Batched matmul over the leading axis: [B,m,k] x [B,k,n] -> [B,m,n].
template <typename T>
TensorT<T> bmm(const TensorT<T>& a, const TensorT<T>& b, bool trans_a = false,
               bool trans_b = false) {
  if (a.rank() != 3 || b.rank() != 3)
    throw ShapeError("bmm: expected rank-3 tensors, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  if (a.dim(0) != b.dim(0))
    throw ShapeError("bmm: batch dimensions disagree: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  int B = a.dim(0);
  int am = trans_a ? a.dim(2) : a.dim(1);
  int ak = trans_a ? a.dim(1) : a.dim(2);
  int bk = trans_b ? b.dim(2) : b.dim(1);
  int bn = trans_b ? b.dim(1) : b.dim(2);
  if (ak != bk)
    throw ShapeError("bmm: inner dimensions disagree: " + shape_str(a.shape()) +
                     (trans_a ? "^T" : "") + " vs " + shape_str(b.shape()) +
                     (trans_b ? "^T" : ""));

  auto out = TensorT<T>::zeros({B, am, bn});
  size_t astride = static_cast<size_t>(a.dim(1)) * a.dim(2);
  size_t bstride = static_cast<size_t>(b.dim(1)) * b.dim(2);
  size_t ostride = static_cast<size_t>(am) * bn;
  for (int s = 0; s < B; ++s) {
    std::vector<T> sa, sb;
    const T *pa, *pb;
    int r, c;
    std::vector<T> aslice(a.values().begin() + s * astride,
                          a.values().begin() + (s + 1) * astride);
    std::vector<T> bslice(b.values().begin() + s * bstride,
                          b.values().begin() + (s + 1) * bstride);
    detail::effective(aslice, a.dim(1), a.dim(2), trans_a, sa, pa, r, c);
    detail::effective(bslice, b.dim(1), b.dim(2), trans_b, sb, pb, r, c);
    detail::mm_acc(pa, pb, out.values().data() + s * ostride, am, ak, bn);
  }

  if (detail::tracing<T>({&a, &b})) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    detail::record(out, [ad, bd, od, trans_a, trans_b, B, am, ak, bn, astride, bstride,
                         ostride]() {
      for (int s = 0; s < B; ++s) {
        const T* g = od->g.data() + s * ostride;
        std::vector<T> aslice(ad->v.begin() + s * astride, ad->v.begin() + (s + 1) * astride);
        std::vector<T> bslice(bd->v.begin() + s * bstride, bd->v.begin() + (s + 1) * bstride);
        if (ad->requires_grad) {
          std::vector<T> sb;
          const T* pb;
          int r, c;
          detail::effective(bslice, bd->shape[1], bd->shape[2], !trans_b, sb, pb, r, c);
          std::vector<T> tmp(static_cast<size_t>(am) * ak, T(0));
          detail::mm_acc(g, pb, tmp.data(), am, bn, ak);
          if (ad->g.empty()) ad->g.assign(ad->v.size(), T(0));
          T* dst = ad->g.data() + s * astride;
          if (!trans_a) {
            for (size_t i = 0; i < tmp.size(); ++i) dst[i] += tmp[i];
          } else {
            auto tt = detail::transposed(tmp.data(), am, ak);
            for (size_t i = 0; i < tt.size(); ++i) dst[i] += tt[i];
          }
        }
        if (bd->requires_grad) {
          std::vector<T> sa;
          const T* pa;
          int r, c;
          detail::effective(aslice, ad->shape[1], ad->shape[2], !trans_a, sa, pa, r, c);
          std::vector<T> tmp(static_cast<size_t>(ak) * bn, T(0));
          detail::mm_acc(pa, g, tmp.data(), ak, am, bn);
          if (bd->g.empty()) bd->g.assign(bd->v.size(), T(0));
          T* dst = bd->g.data() + s * bstride;
          if (!trans_b) {
            for (size_t i = 0; i < tmp.size(); ++i) dst[i] += tmp[i];
          } else {
            auto tt = detail::transposed(tmp.data(), ak, bn);
            for (size_t i = 0; i < tt.size(); ++i) dst[i] += tt[i];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  auto out = TensorT<T>::from(std::move(shape), x.values());
  if (detail::tracing<T>({&x})) {
    auto xd = x.ptr(), od = out.ptr();
    detail::record(out, [xd, od]() {
      if (!xd->requires_grad) return;
      if (xd->g.empty()) xd->g.assign(xd->v.size(), T(0));
      for (size_t i = 0; i < od->g.size(); ++i) xd->g[i] += od->g[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  int rank = static_cast<int>(s0.size());
  if (axis < 0 || axis >= rank) throw ShapeError("concat: bad axis");
  Shape out_shape = s0;
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis && p.dim(i) != s0[static_cast<size_t>(i)])
        throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(s0));
    total += p.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[static_cast<size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= s0[static_cast<size_t>(i)];

  auto out = TensorT<T>::zeros(out_shape);
  {
    int64_t off = 0;
    for (const auto& p : parts) {
      int64_t w = static_cast<int64_t>(p.dim(axis)) * inner;
      for (int64_t o = 0; o < outer; ++o)
        std::copy_n(p.values().data() + o * w, w,
                    out.values().data() + o * total * inner + off);
      off += w;
    }
  }

  bool rec = false;
  for (const auto& p : parts) rec = rec || detail::tracing<T>({&p});
  if (rec) {
    std::vector<std::shared_ptr<TensorDataT<T>>> pds;
    for (const auto& p : parts) pds.push_back(p.ptr());
    auto od = out.ptr();
    detail::record(out, [pds, od, outer, inner, total, axis]() {
      int64_t off = 0;
      for (const auto& pd : pds) {
        int64_t w = static_cast<int64_t>(pd->shape[static_cast<size_t>(axis)]) * inner;
        if (pd->requires_grad) {
          if (pd->g.empty()) pd->g.assign(pd->v.size(), T(0));
          for (int64_t o = 0; o < outer; ++o) {
            const T* src = od->g.data() + o * total * inner + off;
            T* dst = pd->g.data() + o * w;
            for (int64_t i = 0; i < w; ++i) dst[i] += src[i];
          }
        }
        off += w;
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> slice(const TensorT<T>& x, int axis, int start, int len) {
  int rank = x.rank();
  if (axis < 0 || axis >= rank) throw ShapeError("slice: bad axis");
  int d = x.dim(axis);
  if (start < 0 || len <= 0 || start + len > d)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = len;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= x.dim(i);

  auto out = TensorT<T>::zeros(out_shape);
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(x.values().data() + (o * d + start) * inner, len * inner,
                out.values().data() + o * len * inner);

  if (detail::tracing<T>({&x})) {
    auto xd = x.ptr(), od = out.ptr();
    detail::record(out, [xd, od, outer, inner, d, start, len]() {
      if (!xd->requires_grad) return;
      if (xd->g.empty()) xd->g.assign(xd->v.size(), T(0));
      for (int64_t o = 0; o < outer; ++o) {
        const T* src = od->g.data() + o * len * inner;
        T* dst = xd->g.data() + (o * d + start) * inner;
        for (int64_t i = 0; i < static_cast<int64_t>(len) * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
TensorT<T> unary_op(const TensorT<T>& x, FwdFn fwd, BwdFn bwd_factor_from_xy) {
  auto out = TensorT<T>::zeros(x.shape());
  for (size_t i = 0; i < x.values().size(); ++i) out.values()[i] = fwd(x.values()[i]);
  if (tracing<T>({&x})) {
    auto xd = x.ptr(), od = out.ptr();
    record(out, [xd, od, bwd_factor_from_xy]() {
      if (!xd->requires_grad) return;
      if (xd->g.empty()) xd->g.assign(xd->v.size(), T(0));
      for (size_t i = 0; i < od->g.size(); ++i)
        xd->g[i] += od->g[i] * bwd_factor_from_xy(xd->v[i], od->v[i]);
    });
  }
  return out;
}

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

}  // namespace detail

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "add");
  auto out = TensorT<T>::zeros(a.shape());
  for (size_t i = 0; i < out.values().size(); ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  if (detail::tracing<T>({&a, &b})) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    detail::record(out, [ad, bd, od]() {
      for (auto* d : {ad.get(), bd.get()}) {
        if (!d->requires_grad) continue;
        if (d->g.empty()) d->g.assign(d->v.size(), T(0));
        for (size_t i = 0; i < od->g.size(); ++i) d->g[i] += od->g[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "sub");
  auto out = TensorT<T>::zeros(a.shape());
  for (size_t i = 0; i < out.values().size(); ++i)
    out.values()[i] = a.values()[i] - b.values()[i];
  if (detail::tracing<T>({&a, &b})) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    detail::record(out, [ad, bd, od]() {
      if (ad->requires_grad) {
        if (ad->g.empty()) ad->g.assign(ad->v.size(), T(0));
        for (size_t i = 0; i < od->g.size(); ++i) ad->g[i] += od->g[i];
      }
      if (bd->requires_grad) {
        if (bd->g.empty()) bd->g.assign(bd->v.size(), T(0));
        for (size_t i = 0; i < od->g.size(); ++i) bd->g[i] -= od->g[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "mul");
  auto out = TensorT<T>::zeros(a.shape());
  for (size_t i = 0; i < out.values().size(); ++i)
    out.values()[i] = a.values()[i] * b.values()[i];
  if (detail::tracing<T>({&a, &b})) {
    auto ad = a.ptr(), bd = b.ptr(), od = out.ptr();
    detail::record(out, [ad, bd, od]() {
      if (ad->requires_grad) {
        if (ad->g.empty()) ad->g.assign(ad->v.size(), T(0));
        for (size_t i = 0; i < od->g.size(); ++i) ad->g[i] += od->g[i] * bd->v[i];
      }
      if (bd->requires_grad) {
        if (bd->g.empty()) bd->g.assign(bd->v.size(), T(0));
        for (size_t i = 0; i < od->g.size(); ++i) bd->g[i] += od->g[i] * ad->v[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> neg(const TensorT<T>& x) {
  return detail::unary_op(
      x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
TensorT<T> scale(const TensorT<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  return detail::unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  return detail::unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
TensorT<T> tanh(const TensorT<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
TensorT<T> log(const TensorT<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

// Values clamped to [lo, hi]; gradient passes through inside the range.
template <typename T>
TensorT<T> clamp(const TensorT<T>& x, T lo, T hi) {
  return detail::unary_op(
      x, [lo, hi](T v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// Multiplies each leading-axis slice by a per-row constant (masking helper).
template <typename T>
TensorT<T> scale_rows(const TensorT<T>& x, const std::vector<T>& s) {
  if (x.rank() < 1 || static_cast<size_t>(x.dim(0)) != s.size())
    throw ShapeError("scale_rows: " + shape_str(x.shape()) + " vs " +
                     std::to_string(s.size()) + " factors");
  int64_t inner = x.numel() / x.dim(0);
  auto out = TensorT<T>::zeros(x.shape());
  for (int b = 0; b < x.dim(0); ++b)
    for (int64_t i = 0; i < inner; ++i)
      out.values()[b * inner + i] = x.values()[b * inner + i] * s[static_cast<size_t>(b)];
  if (detail::tracing<T>({&x})) {
    auto xd = x.ptr(), od = out.ptr();
    int B = x.dim(0);
    detail::record(out, [xd, od, s, B, inner]() {
      if (!xd->requires_grad) return;
      if (xd->g.empty()) xd->g.assign(xd->v.size(), T(0));
      for (int b = 0; b < B; ++b)
        for (int64_t i = 0; i < inner; ++i)
          xd->g[b * inner + i] += od->g[b * inner + i] * s[static_cast<size_t>(b)];
    });
  }
  return out;
}

// Adds a rank-1 bias over the last axis.
template <typename T>
TensorT<T> add_bias(const TensorT<T>& x, const TensorT<T>& bias) {
  if (bias.rank() != 1 || bias.dim(0) != x.dim(x.rank() - 1))
    throw ShapeError("add_bias: " + shape_str(x.shape()) + " vs " +
                     shape_str(bias.shape()));
  int n = bias.dim(0);
  int64_t rows = x.numel() / n;
  auto out = TensorT<T>::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < n; ++j)
      out.values()[r * n + j] = x.values()[r * n + j] + bias.values()[static_cast<size_t>(j)];
  if (detail::tracing<T>({&x, &bias})) {
    auto xd = x.ptr(), bd = bias.ptr(), od = out.ptr();
    detail::record(out, [xd, bd, od, rows, n]() {
      if (xd->requires_grad) {
        if (xd->g.empty()) xd->g.assign(xd->v.size(), T(0));
        for (size_t i = 0; i < od->g.size(); ++i) xd->g[i] += od->g[i];
      }
      if (bd->requires_grad) {
        if (bd->g.empty()) bd->g.assign(bd->v.size(), T(0));
        for (int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < n; ++j) bd->g[static_cast<size_t>(j)] += od->g[r * n + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
  T acc = T(0);
  for (T v : x.values()) acc += v;
  auto out = TensorT<T>::scalar(acc);
  if (detail::tracing<T>({&x})) {
    auto xd = x.ptr(), od = out.ptr();
    detail::record(out, [xd, od]() {
      if (!xd->requires_grad) return;
      if (xd->g.empty()) xd->g.assign(xd->v.size(), T(0));
      for (auto& gi : xd->g) gi += od->g[0];
    });
  }
  return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// Sums over the last axis: [..., n] -> [...].
template <typename T>
TensorT<T> sum_last(const TensorT<T>& x) {
  if (x.rank() < 1) throw ShapeError("sum_last: rank-0 input");
  int n = x.dim(x.rank() - 1);
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  int64_t rows = x.numel() / n;
  auto out = TensorT<T>::zeros(out_shape);
  for (int64_t r = 0; r < rows; ++r) {
    T acc = T(0);
    for (int j = 0; j < n; ++j) acc += x.values()[r * n + j];
    out.values()[static_cast<size_t>(r)] = acc;
  }
  if (detail::tracing<T>({&x})) {
    auto xd = x.ptr(), od = out.ptr();
    detail::record(out, [xd, od, rows, n]() {
      if (!xd->requires_grad) return;
      if (xd->g.empty()) xd->g.assign(xd->v.size(), T(0));
      for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < n; ++j) xd->g[r * n + j] += od->g[static_cast<size_t>(r)];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// masked softmax
// ---------------------------------------------------------------------------

// Softmax over the last axis with masked positions pinned to exactly 0.
// Accepted mask shapes: identical to scores, or [B, n] against [B, m, n]
// (one mask row broadcast across the middle axis). Stabilized by subtracting
// the max over unmasked entries. A row with no live position is an error.
template <typename T>
TensorT<T> masked_softmax(const TensorT<T>& scores, const BoolMask& mask) {
  int n = scores.dim(scores.rank() - 1);
  int64_t rows = scores.numel() / n;

  // bcast > 1 means one mask row covers `bcast` consecutive score rows.
  int64_t bcast;
  if (mask.shape == scores.shape()) {
    bcast = 1;
  } else if (scores.rank() == 3 && mask.shape.size() == 2 &&
             mask.shape[0] == scores.dim(0) && mask.shape[1] == n) {
    bcast = scores.dim(1);
  } else {
    throw ShapeError("masked_softmax: mask " + shape_str(mask.shape) +
                     " incompatible with scores " + shape_str(scores.shape()));
  }

  auto out = TensorT<T>::zeros(scores.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const uint8_t* m = mask.v.data() + (r / bcast) * n;
    const T* in = scores.values().data() + r * n;
    T* o = out.values().data() + r * n;
    T mx = T(0);
    bool any = false;
    for (int j = 0; j < n; ++j) {
      if (!m[j]) continue;
      mx = any ? std::max(mx, in[j]) : in[j];
      any = true;
    }
    if (!any)
      throw ContractError("masked_softmax: degenerate mask (all positions masked) in row " +
                          std::to_string(r));
    T z = T(0);
    for (int j = 0; j < n; ++j) {
      if (m[j]) {
        o[j] = std::exp(in[j] - mx);
        z += o[j];
      } else {
        o[j] = T(0);
      }
    }
    for (int j = 0; j < n; ++j)
      if (m[j]) o[j] /= z;
  }

  if (detail::tracing<T>({&scores})) {
    auto xd = scores.ptr(), od = out.ptr();
    detail::record(out, [xd, od, mv = mask.v, bcast, rows, n]() {
      if (!xd->requires_grad) return;
      if (xd->g.empty()) xd->g.assign(xd->v.size(), T(0));
      for (int64_t r = 0; r < rows; ++r) {
        const uint8_t* m = mv.data() + (r / bcast) * n;
        const T* a = od->v.data() + r * n;
        const T* g = od->g.data() + r * n;
        T dot = T(0);
        for (int j = 0; j < n; ++j)
          if (m[j]) dot += a[j] * g[j];
        T* dst = xd->g.data() + r * n;
        for (int j = 0; j < n; ++j)
          if (m[j]) dst[j] += a[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

// Inverted dropout: survivors are scaled by 1/(1-rate) at train time so eval
// is the identity map.
template <typename T>
TensorT<T> dropout(const TensorT<T>& x, double rate, bool train, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  if (!train || rate == 0.0) return x;
  T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<uint8_t> keep(x.values().size());
  for (auto& k : keep) k = rng.bernoulli(rate) ? 0 : 1;
  auto out = TensorT<T>::zeros(x.shape());
  for (size_t i = 0; i < keep.size(); ++i)
    out.values()[i] = keep[i] ? x.values()[i] * keep_scale : T(0);
  if (detail::tracing<T>({&x})) {
    auto xd = x.ptr(), od = out.ptr();
    detail::record(out, [xd, od, keep = std::move(keep), keep_scale]() {
      if (!xd->requires_grad) return;
      if (xd->g.empty()) xd->g.assign(xd->v.size(), T(0));
      for (size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) xd->g[i] += od->g[i] * keep_scale;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// embedding lookup
// ---------------------------------------------------------------------------

// table [V, d] gathered by integer indices; backward touches only the
// gathered rows.
template <typename T>
TensorT<T> embedding_lookup(const TensorT<T>& table, const IndexArray& idx) {
  if (table.rank() != 2)
    throw ShapeError("embedding_lookup: table must be rank-2, got " +
                     shape_str(table.shape()));
  int V = table.dim(0), d = table.dim(1);
  Shape out_shape = idx.shape;
  out_shape.push_back(d);
  auto out = TensorT<T>::zeros(out_shape);
  for (size_t i = 0; i < idx.v.size(); ++i) {
    int32_t row = idx.v[i];
    if (row < 0 || row >= V)
      throw LookupError("embedding_lookup: index " + std::to_string(row) +
                        " out of table range [0, " + std::to_string(V) + ")");
    std::copy_n(table.values().data() + static_cast<size_t>(row) * d, d,
                out.values().data() + i * d);
  }
  if (detail::tracing<T>({&table})) {
    auto td = table.ptr(), od = out.ptr();
    auto rows = idx.v;
    detail::record(out, [td, od, rows = std::move(rows), d]() {
      if (!td->requires_grad) return;
      if (td->g.empty()) td->g.assign(td->v.size(), T(0));
      for (size_t i = 0; i < rows.size(); ++i) {
        const T* src = od->g.data() + i * d;
        T* dst = td->g.data() + static_cast<size_t>(rows[i]) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using NoGrad = NoGradT<float>;

}  // namespace trian

#endif  // TRIAN_TENSOR_HPP
