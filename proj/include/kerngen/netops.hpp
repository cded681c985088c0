#ifndef KERNGEN_NETOPS_HPP
#define KERNGEN_NETOPS_HPP

#include <optional>
#include <string>

#include "kerngen/nda.hpp"

namespace kerngen {

// one convolution operation. spatial kernel size and stride are scalars
// (same in X and Y); padding is symmetric zero padding per spatial side.
struct conv_spec_t {
  int64_t in_y = 0;
  int64_t in_x = 0;
  int64_t in_c = 0;  // IC
  int64_t oc = 0;
  int64_t ksz = 0;
  int64_t stride = 1;
  int64_t pad = 0;
  int64_t batch = 1;  // B
  bool fuse_relu = false;
  bool has_bias = false;

  dims_t in_dims() const;  // (B:)Y:X:C; leading B only when batch > 1
  bool operator==(conv_spec_t const&) const = default;
};

struct conv_shapes_t {
  int64_t out_y = 0;
  int64_t out_x = 0;
  dims_t filts_dims;  // OC:KSZ:KSZ:IC
  dims_t out_dims;    // (B:)Y:X:C
  dims_t inmat_dims;  // M:K with M = B*out_y*out_x, K = KSZ*KSZ*IC
  int64_t flops = 0;      // 2 * out_points * OC * KSZ*KSZ*IC
  int64_t min_bytes = 0;  // 4 * (|in| + |filts| + |out|)
};

// out_X = 1 + floor((in_X + 2*pad - KSZ)/stride), likewise out_Y
conv_shapes_t infer_shapes(conv_spec_t const& s);

// direct 7-loop reference convolution. accumulation order per output point is
// ky, then kx, then ic, all ascending, with a float64 accumulator; out-of-bounds
// reads contribute zero; bias then relu applied per the spec flags.
nda_t conv_oracle(conv_spec_t const& s, nda_t const& in, nda_t const& filts, nda_t const* bias = nullptr);

// patch-matrix gather for a single image (batch == 1): row r is the flattened
// patch for output point r (row-major over out_y, out_x); columns ordered
// ky:kx:ic so the filter matrix is a pure reshape of filts.
nda_t im2col(conv_spec_t const& s, nda_t const& in);

// im2col + plain triple-loop GEMM + reshape; batches via per-image calls
nda_t conv_via_gemm(conv_spec_t const& s, nda_t const& in, nda_t const& filts);

enum class pool_kind_t { max_pool, avg_pool };
nda_t pool_ref(pool_kind_t kind, int64_t window, int64_t stride, nda_t const& in);  // over Y,X axes
nda_t softmax_ref(nda_t const& in, std::string const& axis);
nda_t relu_ref(nda_t const& in);

// op-list line: `conv1 in=Y:X:C=205:205:3 OC=96 KSZ=7 stride=2 pad=0 B=1 relu=1 bias=1`
// pad accepts "same" for floor(KSZ/2). relu/bias are required when
// require_explicit_fusion is set (suite files), else default to 0.
struct named_op_t {
  std::string name;
  conv_spec_t spec;
};
named_op_t parse_op_line(std::string const& line, bool require_explicit_fusion = false);
std::string format_op_line(named_op_t const& op);

}  // namespace kerngen

#endif
