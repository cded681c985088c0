#include "kerngen/netops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kerngen {

dims_t conv_spec_t::in_dims() const {
  if (batch > 1) { return dims_t{{"B", batch}, {"Y", in_y}, {"X", in_x}, {"C", in_c}}; }
  return dims_t{{"Y", in_y}, {"X", in_x}, {"C", in_c}};
}

conv_shapes_t infer_shapes(conv_spec_t const& s) {
  if (s.in_y < 1 || s.in_x < 1 || s.in_c < 1 || s.oc < 1 || s.ksz < 1 || s.stride < 1 || s.pad < 0 || s.batch < 1) {
    rt_err("invalid conv spec: all dims/counts must be positive (pad >= 0)");
  }
  if (s.in_y + 2 * s.pad < s.ksz || s.in_x + 2 * s.pad < s.ksz) {
    rt_err(strprintf("kernel size %lld exceeds padded input %lldx%lld (pad %lld): no valid output point",
                     (long long)s.ksz, (long long)(s.in_y + 2 * s.pad), (long long)(s.in_x + 2 * s.pad), (long long)s.pad));
  }
  conv_shapes_t r;
  r.out_y = 1 + (s.in_y + 2 * s.pad - s.ksz) / s.stride;
  r.out_x = 1 + (s.in_x + 2 * s.pad - s.ksz) / s.stride;
  r.filts_dims = dims_t{{"OC", s.oc}, {"KY", s.ksz}, {"KX", s.ksz}, {"IC", s.in_c}};
  if (s.batch > 1) {
    r.out_dims = dims_t{{"B", s.batch}, {"Y", r.out_y}, {"X", r.out_x}, {"C", s.oc}};
  } else {
    r.out_dims = dims_t{{"Y", r.out_y}, {"X", r.out_x}, {"C", s.oc}};
  }
  int64_t const out_pts = checked_mul(checked_mul(r.out_y, r.out_x, "out points"), s.batch, "out points");
  int64_t const patch = checked_mul(checked_mul(s.ksz, s.ksz, "patch"), s.in_c, "patch");
  r.inmat_dims = dims_t{{"M", out_pts}, {"K", patch}};
  r.flops = checked_mul(2, checked_mul(checked_mul(out_pts, s.oc, "flops"), patch, "flops"), "flops");
  int64_t const in_elems = s.in_dims().product();
  r.min_bytes = 4 * (in_elems + r.filts_dims.product() + r.out_dims.product());
  return r;
}

nda_t conv_oracle(conv_spec_t const& s, nda_t const& in, nda_t const& filts, nda_t const* bias) {
  conv_shapes_t const sh = infer_shapes(s);
  if (!(in.dims() == s.in_dims())) { rt_err("conv_oracle: in dims " + in.dims().str() + " do not match spec " + s.in_dims().str()); }
  if (!(filts.dims() == sh.filts_dims)) { rt_err("conv_oracle: filts dims " + filts.dims().str() + " vs expected " + sh.filts_dims.str()); }
  if (s.has_bias) {
    if (!bias) { rt_err("conv_oracle: spec has_bias but no bias given"); }
    if (bias->elems() != s.oc) { rt_err("conv_oracle: bias length must equal OC"); }
  }
  nda_t out{sh.out_dims};
  float const* const ind = in.data().data();
  float const* const fd = filts.data().data();
  float* const od = out.data().data();
  int64_t const in_img = s.in_y * s.in_x * s.in_c;
  int64_t const out_img = sh.out_y * sh.out_x * s.oc;
  for (int64_t b = 0; b != s.batch; ++b) {
    for (int64_t oy = 0; oy != sh.out_y; ++oy) {
      for (int64_t ox = 0; ox != sh.out_x; ++ox) {
        for (int64_t oc = 0; oc != s.oc; ++oc) {
          double acc = 0.0;
          for (int64_t ky = 0; ky != s.ksz; ++ky) {
            int64_t const iy = oy * s.stride - s.pad + ky;
            if (iy < 0 || iy >= s.in_y) { continue; }  // zero padding
            for (int64_t kx = 0; kx != s.ksz; ++kx) {
              int64_t const ix = ox * s.stride - s.pad + kx;
              if (ix < 0 || ix >= s.in_x) { continue; }
              int64_t const ib = b * in_img + (iy * s.in_x + ix) * s.in_c;
              int64_t const fb = ((oc * s.ksz + ky) * s.ksz + kx) * s.in_c;
              for (int64_t ic = 0; ic != s.in_c; ++ic) { acc += (double)ind[ib + ic] * (double)fd[fb + ic]; }
            }
          }
          if (s.has_bias) { acc += (double)bias->data()[(size_t)oc]; }
          if (s.fuse_relu && acc < 0.0) { acc = 0.0; }
          od[b * out_img + (oy * sh.out_x + ox) * s.oc + oc] = (float)acc;
        }
      }
    }
  }
  return out;
}

nda_t im2col(conv_spec_t const& s, nda_t const& in) {
  if (s.batch != 1) { rt_err("im2col operates per image; batches are handled with separate per-image calls"); }
  conv_shapes_t const sh = infer_shapes(s);
  if (!(in.dims() == s.in_dims())) { rt_err("im2col: in dims " + in.dims().str() + " do not match spec " + s.in_dims().str()); }
  nda_t inmat{sh.inmat_dims};
  float const* const ind = in.data().data();
  float* const md = inmat.data().data();
  int64_t const cols = sh.inmat_dims.axis(1).size;
  for (int64_t oy = 0; oy != sh.out_y; ++oy) {
    for (int64_t ox = 0; ox != sh.out_x; ++ox) {
      int64_t const row = oy * sh.out_x + ox;
      for (int64_t ky = 0; ky != s.ksz; ++ky) {
        int64_t const iy = oy * s.stride - s.pad + ky;
        for (int64_t kx = 0; kx != s.ksz; ++kx) {
          int64_t const ix = ox * s.stride - s.pad + kx;
          for (int64_t ic = 0; ic != s.in_c; ++ic) {
            float v = 0.0f;
            if (iy >= 0 && iy < s.in_y && ix >= 0 && ix < s.in_x) { v = ind[(iy * s.in_x + ix) * s.in_c + ic]; }
            md[row * cols + (ky * s.ksz + kx) * s.in_c + ic] = v;
          }
        }
      }
    }
  }
  return inmat;
}

// inmat (M:K) * filtsmat (K:N) with float64 accumulation, k ascending
static nda_t matmul(nda_t const& a, nda_t const& b) {
  int64_t const m = a.dims().axis(0).size;
  int64_t const k = a.dims().axis(1).size;
  int64_t const n = b.dims().axis(1).size;
  if (b.dims().axis(0).size != k) { rt_err("matmul inner-dim mismatch"); }
  nda_t c{dims_t{{"M", m}, {"N", n}}};
  float const* const ad = a.data().data();
  float const* const bd = b.data().data();
  float* const cd = c.data().data();
  for (int64_t i = 0; i != m; ++i) {
    for (int64_t j = 0; j != n; ++j) {
      double acc = 0.0;
      for (int64_t kk = 0; kk != k; ++kk) { acc += (double)ad[i * k + kk] * (double)bd[kk * n + j]; }
      cd[i * n + j] = (float)acc;
    }
  }
  return c;
}

nda_t conv_via_gemm(conv_spec_t const& s, nda_t const& in, nda_t const& filts) {
  conv_shapes_t const sh = infer_shapes(s);
  if (!(filts.dims() == sh.filts_dims)) { rt_err("conv_via_gemm: filts dims " + filts.dims().str() + " vs expected " + sh.filts_dims.str()); }
  int64_t const k = s.ksz * s.ksz * s.in_c;
  // filtsmat (K:N) = transpose of the natural (OC x K) reshape of filts
  nda_t filtsmat{dims_t{{"K", k}, {"N", s.oc}}};
  for (int64_t oc = 0; oc != s.oc; ++oc) {
    for (int64_t kk = 0; kk != k; ++kk) { filtsmat.data()[(size_t)(kk * s.oc + oc)] = filts.data()[(size_t)(oc * k + kk)]; }
  }
  nda_t out{sh.out_dims};
  conv_spec_t one = s;
  one.batch = 1;
  int64_t const in_img = s.in_y * s.in_x * s.in_c;
  int64_t const out_img = sh.out_y * sh.out_x * s.oc;
  for (int64_t b = 0; b != s.batch; ++b) {
    nda_t img{one.in_dims()};
    std::copy_n(in.data().begin() + b * in_img, in_img, img.data().begin());
    nda_t const outmat = matmul(im2col(one, img), filtsmat);
    std::copy_n(outmat.data().begin(), out_img, out.data().begin() + b * out_img);
  }
  return out;
}

nda_t pool_ref(pool_kind_t const kind, int64_t const window, int64_t const stride, nda_t const& in) {
  if (window < 1 || stride < 1) { rt_err("pool_ref: window and stride must be >= 1"); }
  size_t const yi = in.dims().index_of("Y");
  size_t const xi = in.dims().index_of("X");
  int64_t const iy = in.dims().axis(yi).size;
  int64_t const ix = in.dims().axis(xi).size;
  if (window > iy || window > ix) { rt_err(strprintf("pool window %lld exceeds input %lldx%lld", (long long)window, (long long)iy, (long long)ix)); }
  int64_t const oy = 1 + (iy - window) / stride;
  int64_t const ox = 1 + (ix - window) / stride;
  std::vector<axis_t> out_axes = in.dims().axes();
  out_axes[yi].size = oy;
  out_axes[xi].size = ox;
  nda_t out{dims_t(out_axes)};
  // iterate all output coordinates; reduce over the window in Y/X
  std::vector<int64_t> oidx(out.dims().rank(), 0);
  int64_t const n = out.elems();
  for (int64_t f = 0; f != n; ++f) {
    std::vector<int64_t> iidx = oidx;
    double acc = kind == pool_kind_t::max_pool ? -HUGE_VAL : 0.0;
    for (int64_t wy = 0; wy != window; ++wy) {
      for (int64_t wx = 0; wx != window; ++wx) {
        iidx[yi] = oidx[yi] * stride + wy;
        iidx[xi] = oidx[xi] * stride + wx;
        double const v = in.at(iidx);
        if (kind == pool_kind_t::max_pool) { acc = std::max(acc, v); } else { acc += v; }
      }
    }
    if (kind == pool_kind_t::avg_pool) { acc /= (double)(window * window); }
    out.data()[(size_t)f] = (float)acc;
    for (size_t i = oidx.size(); i-- > 0;) {
      if (++oidx[i] < out.dims().axis(i).size) { break; }
      oidx[i] = 0;
    }
  }
  return out;
}

nda_t softmax_ref(nda_t const& in, std::string const& axis) {
  size_t const ai = in.dims().index_of(axis);
  int64_t const alen = in.dims().axis(ai).size;
  int64_t const astride = in.dims().strides()[ai];
  nda_t out{in.dims()};
  int64_t const n = in.elems();
  std::vector<bool> done((size_t)n, false);
  for (int64_t f = 0; f != n; ++f) {
    if (done[(size_t)f]) { continue; }
    // f is the first element of its lane along the axis
    double mx = -HUGE_VAL;
    for (int64_t i = 0; i != alen; ++i) { mx = std::max(mx, (double)in.data()[(size_t)(f + i * astride)]); }
    double sum = 0.0;
    for (int64_t i = 0; i != alen; ++i) { sum += std::exp((double)in.data()[(size_t)(f + i * astride)] - mx); }
    for (int64_t i = 0; i != alen; ++i) {
      out.data()[(size_t)(f + i * astride)] = (float)(std::exp((double)in.data()[(size_t)(f + i * astride)] - mx) / sum);
      done[(size_t)(f + i * astride)] = true;
    }
  }
  return out;
}

nda_t relu_ref(nda_t const& in) {
  nda_t out = in;
  for (float& v : out.data()) { v = std::max(0.0f, v); }
  return out;
}

named_op_t parse_op_line(std::string const& line, bool const require_explicit_fusion) {
  std::istringstream iss(line);
  std::string tok;
  if (!(iss >> tok)) { rt_err("empty op line"); }
  named_op_t op;
  op.name = tok;
  bool saw_in = false, saw_oc = false, saw_ksz = false, saw_relu = false, saw_bias = false;
  std::string pad_tok;
  while (iss >> tok) {
    size_t const eq = tok.find('=');
    if (eq == std::string::npos) { rt_err("bad op field (expected key=value): " + tok); }
    std::string const key = tok.substr(0, eq);
    std::string const val = tok.substr(eq + 1);
    auto as_count = [&](char const* what) -> int64_t {
      if (val.empty() || val.find_first_not_of("0123456789") != std::string::npos) { rt_err(strprintf("bad %s value '%s'", what, val.c_str())); }
      return std::stoll(val);
    };
    if (key == "in") {
      dims_t const d = dims_t::parse(val);
      if (d.rank() != 3 || !d.has("Y") || !d.has("X") || !d.has("C")) { rt_err("op 'in' dims must be Y:X:C, got " + val); }
      op.spec.in_y = d.size_of("Y");
      op.spec.in_x = d.size_of("X");
      op.spec.in_c = d.size_of("C");
      saw_in = true;
    } else if (key == "OC") { op.spec.oc = as_count("OC"); saw_oc = true; }
    else if (key == "KSZ") { op.spec.ksz = as_count("KSZ"); saw_ksz = true; }
    else if (key == "stride") { op.spec.stride = as_count("stride"); }
    else if (key == "pad") { pad_tok = val; }
    else if (key == "B") { op.spec.batch = as_count("B"); }
    else if (key == "relu") { op.spec.fuse_relu = as_count("relu") != 0; saw_relu = true; }
    else if (key == "bias") { op.spec.has_bias = as_count("bias") != 0; saw_bias = true; }
    else { rt_err("unknown op field '" + key + "'"); }
  }
  if (!saw_in || !saw_oc || !saw_ksz) { rt_err("op line missing required in=/OC=/KSZ= fields: " + line); }
  if (require_explicit_fusion && (!saw_relu || !saw_bias)) {
    rt_err("op line must state relu= and bias= explicitly: " + line);
  }
  if (pad_tok == "same") { op.spec.pad = op.spec.ksz / 2; }
  else if (!pad_tok.empty()) {
    if (pad_tok.find_first_not_of("0123456789") != std::string::npos) { rt_err("bad pad value '" + pad_tok + "'"); }
    op.spec.pad = std::stoll(pad_tok);
  }
  infer_shapes(op.spec);  // validate
  return op;
}

std::string format_op_line(named_op_t const& op) {
  conv_spec_t const& s = op.spec;
  return strprintf("%s in=Y:X:C=%lld:%lld:%lld OC=%lld KSZ=%lld stride=%lld pad=%lld B=%lld relu=%d bias=%d",
                   op.name.c_str(), (long long)s.in_y, (long long)s.in_x, (long long)s.in_c, (long long)s.oc,
                   (long long)s.ksz, (long long)s.stride, (long long)s.pad, (long long)s.batch, s.fuse_relu ? 1 : 0,
                   s.has_bias ? 1 : 0);
}

}  // namespace kerngen
