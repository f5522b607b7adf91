// Copyright (c) 2026 The Pseudo-ISP Project Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Spatial operators on NCHW tensors: convolution, concatenation, cropping and
// the Bayer/pixel-shuffle rearrangements used by the pseudo ISP.

#include <Eigen/Core>

#include <numeric>

#include "pseudoisp/tensor.hpp"

namespace pseudoisp {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline void require_rank4(const Shape& s, const char* op) {
    if (s.size() != 4)
        throw ShapeError(std::string(op) + ": expected NCHW tensor, got shape " + to_string(s));
}

// Unfolds `channels` planes of size height x width into a
// [channels*k*k, height*width] matrix with zero padding (k - 1) / 2.
template <typename T>
void im2col(const T* src, int channels, int height, int width, int k, T* dst) {
    const int pad = (k - 1) / 2;
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int c = 0; c < channels; ++c) {
        const T* in = src + c * plane;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = dst + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane;
                const int x0 = std::max(0, pad - kx);
                const int x1 = std::min(width, width + pad - kx);
                for (int y = 0; y < height; ++y) {
                    T* out = row + static_cast<std::size_t>(y) * width;
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= height) {
                        std::fill(out, out + width, T(0));
                        continue;
                    }
                    const T* line = in + static_cast<std::size_t>(sy) * width + (kx - pad);
                    std::fill(out, out + x0, T(0));
                    std::copy(line + x0, line + x1, out + x0);
                    std::fill(out + x1, out + width, T(0));
                }
            }
        }
    }
}

// Adjoint of im2col: scatters the columns back onto the planes (accumulating).
template <typename T>
void col2im_add(const T* cols, int channels, int height, int width, int k, T* dst) {
    const int pad = (k - 1) / 2;
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int c = 0; c < channels; ++c) {
        T* out = dst + c * plane;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane;
                const int x0 = std::max(0, pad - kx);
                const int x1 = std::min(width, width + pad - kx);
                for (int y = 0; y < height; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= height) continue;
                    const T* in = row + static_cast<std::size_t>(y) * width;
                    T* line = out + static_cast<std::size_t>(sy) * width + (kx - pad);
                    for (int x = x0; x < x1; ++x) line[x] += in[x];
                }
            }
        }
    }
}

}  // namespace detail

/// Same-size 2-D cross-correlation with zero padding (k - 1) / 2.
///
/// input  [N, C_in, H, W]
/// weight [C_out, C_in / groups, k, k], k odd
/// bias   [C_out] or an undefined tensor for no bias
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int groups = 1) {
    detail::require_rank4(input.shape(), "conv2d input");
    detail::require_rank4(weight.shape(), "conv2d weight");
    const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int cout = weight.dim(0), cg = weight.dim(1), k = weight.dim(2);
    if (groups <= 0) throw ShapeError("conv2d: groups must be positive");
    if (cin % groups != 0)
        throw ShapeError("conv2d: groups=" + std::to_string(groups) + " does not divide C_in=" +
                         std::to_string(cin));
    if (cout % groups != 0)
        throw ShapeError("conv2d: groups=" + std::to_string(groups) + " does not divide C_out=" +
                         std::to_string(cout));
    if (cg != cin / groups)
        throw ShapeError("conv2d: weight expects " + std::to_string(cg) +
                         " input channels per group, input provides " +
                         std::to_string(cin / groups) + " (input " + to_string(input.shape()) +
                         ", weight " + to_string(weight.shape()) + ")");
    if (weight.dim(3) != k || k % 2 == 0)
        throw ShapeError("conv2d: kernel must be square with odd size, got " +
                         to_string(weight.shape()));
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout))
        throw ShapeError("conv2d: bias shape " + to_string(bias.shape()) + " does not match C_out=" +
                         std::to_string(cout));

    const int cog = cout / groups;
    const int kk = cg * k * k;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<T> out(static_cast<std::size_t>(n) * cout * hw);
    std::vector<T> cols(k == 1 ? 0 : static_cast<std::size_t>(kk) * hw);

    const T* x = input.data().data();
    const T* wt = weight.data().data();
    for (int b = 0; b < n; ++b) {
        for (int g = 0; g < groups; ++g) {
            const T* in_g = x + (static_cast<std::size_t>(b) * cin + g * cg) * hw;
            const T* col_ptr = in_g;
            if (k != 1) {
                detail::im2col(in_g, cg, h, w, k, cols.data());
                col_ptr = cols.data();
            }
            detail::ConstMatrixMap<T> wg(wt + static_cast<std::size_t>(g) * cog * kk, cog, kk);
            detail::ConstMatrixMap<T> cm(col_ptr, kk, hw);
            detail::MatrixMap<T> og(out.data() + (static_cast<std::size_t>(b) * cout + g * cog) * hw,
                                    cog, hw);
            og.noalias() = wg * cm;
            if (has_bias) {
                const T* bs = bias.data().data() + g * cog;
                for (int o = 0; o < cog; ++o) og.row(o).array() += bs[o];
            }
        }
    }

    std::vector<Tensor<T>> inputs{input, weight};
    if (has_bias) inputs.push_back(bias);
    return detail::make_result<T>(
        {n, cout, h, w}, std::move(out), inputs,
        [n, cin, h, w, cout, cg, cog, k, kk, hw, groups, has_bias](Node<T>& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            Node<T>* pb = has_bias ? self.parents[2].get() : nullptr;
            if (px.requires_grad) px.ensure_grad();
            if (pw.requires_grad) pw.ensure_grad();
            if (pb && pb->requires_grad) pb->ensure_grad();
            std::vector<T> cols(static_cast<std::size_t>(kk) * hw);
            for (int b = 0; b < n; ++b) {
                for (int g = 0; g < groups; ++g) {
                    const std::size_t in_off = (static_cast<std::size_t>(b) * cin + g * cg) * hw;
                    const std::size_t out_off = (static_cast<std::size_t>(b) * cout + g * cog) * hw;
                    detail::ConstMatrixMap<T> dout(self.grad.data() + out_off, cog, hw);
                    if (pw.requires_grad) {
                        const T* col_ptr = px.data.data() + in_off;
                        if (k != 1) {
                            detail::im2col(col_ptr, cg, h, w, k, cols.data());
                            col_ptr = cols.data();
                        }
                        detail::ConstMatrixMap<T> cm(col_ptr, kk, hw);
                        detail::MatrixMap<T> dw(pw.grad.data() + static_cast<std::size_t>(g) * cog * kk,
                                                cog, kk);
                        dw.noalias() += dout * cm.transpose();
                    }
                    if (pb && pb->requires_grad) {
                        // Fixed summation order: Eigen reductions peel by address alignment.
                        for (int o = 0; o < cog; ++o) {
                            const T* row = self.grad.data() + out_off + static_cast<std::size_t>(o) * hw;
                            pb->grad[g * cog + o] += std::accumulate(row, row + hw, T(0));
                        }
                    }
                    if (px.requires_grad) {
                        detail::ConstMatrixMap<T> wg(
                            pw.data.data() + static_cast<std::size_t>(g) * cog * kk, cog, kk);
                        if (k == 1) {
                            detail::MatrixMap<T> dx(px.grad.data() + in_off, kk, hw);
                            dx.noalias() += wg.transpose() * dout;
                        } else {
                            detail::MatrixMap<T> dc(cols.data(), kk, hw);
                            dc.noalias() = wg.transpose() * dout;
                            detail::col2im_add(cols.data(), cg, h, w, k,
                                               px.grad.data() + in_off);
                        }
                    }
                }
            }
        });
}

/// Concatenates NCHW tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    for (const auto& p : parts) detail::require_rank4(p.shape(), "concat_channels");
    const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
    int channels = 0;
    std::vector<int> offsets;
    for (const auto& p : parts) {
        if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w)
            throw ShapeError("concat_channels: incompatible shapes " + to_string(parts[0].shape()) +
                             " and " + to_string(p.shape()));
        offsets.push_back(channels);
        channels += p.dim(1);
    }
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<T> out(static_cast<std::size_t>(n) * channels * hw);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const int c = parts[i].dim(1);
        for (int b = 0; b < n; ++b) {
            const T* src = parts[i].data().data() + static_cast<std::size_t>(b) * c * hw;
            std::copy(src, src + c * hw,
                      out.data() + (static_cast<std::size_t>(b) * channels + offsets[i]) * hw);
        }
    }
    return detail::make_result<T>(
        {n, channels, h, w}, std::move(out), parts, [n, channels, hw, offsets](Node<T>& self) {
            for (std::size_t i = 0; i < self.parents.size(); ++i) {
                auto& p = *self.parents[i];
                if (!p.requires_grad) continue;
                p.ensure_grad();
                const int c = p.shape[1];
                for (int b = 0; b < n; ++b) {
                    const T* src =
                        self.grad.data() + (static_cast<std::size_t>(b) * channels + offsets[i]) * hw;
                    T* dst = p.grad.data() + static_cast<std::size_t>(b) * c * hw;
                    for (std::size_t j = 0; j < c * hw; ++j) dst[j] += src[j];
                }
            }
        });
}

/// Spatial crop of an NCHW tensor to rows [top, top+height) and columns [left, left+width).
template <typename T>
Tensor<T> crop(const Tensor<T>& x, int top, int left, int height, int width) {
    detail::require_rank4(x.shape(), "crop");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (top < 0 || left < 0 || height <= 0 || width <= 0 || top + height > h || left + width > w)
        throw ShapeError("crop: window (" + std::to_string(top) + "," + std::to_string(left) + ")+" +
                         std::to_string(height) + "x" + std::to_string(width) +
                         " outside tensor " + to_string(x.shape()));
    std::vector<T> out(static_cast<std::size_t>(n) * c * height * width);
    auto src = x.data();
    std::size_t o = 0;
    for (int p = 0; p < n * c; ++p)
        for (int y = 0; y < height; ++y) {
            const T* line = src.data() + (static_cast<std::size_t>(p) * h + top + y) * w + left;
            std::copy(line, line + width, out.data() + o);
            o += width;
        }
    return detail::make_result<T>({n, c, height, width}, std::move(out), {&x},
                                  [n, c, h, w, top, left, height, width](Node<T>& self) {
                                      auto& px = *self.parents[0];
                                      if (!px.requires_grad) return;
                                      px.ensure_grad();
                                      std::size_t o = 0;
                                      for (int p = 0; p < n * c; ++p)
                                          for (int y = 0; y < height; ++y) {
                                              T* line = px.grad.data() +
                                                        (static_cast<std::size_t>(p) * h + top + y) * w +
                                                        left;
                                              for (int xx = 0; xx < width; ++xx)
                                                  line[xx] += self.grad[o++];
                                          }
                                  });
}

// ---------------------------------------------------------------------------
// Bayer sampling and 2x2 rearrangements

/// Colour index (0 = R, 1 = G, 2 = B) of an RGGB site.
constexpr int rggb_color(int y, int x) {
    const bool odd_y = y & 1, odd_x = x & 1;
    if (!odd_y && !odd_x) return 0;
    if (odd_y && odd_x) return 2;
    return 1;
}

/// RGGB mosaic of a 3-channel image: [N,3,H,W] -> [N,1,H,W].
template <typename T>
Tensor<T> cfa_sample(const Tensor<T>& dem) {
    detail::require_rank4(dem.shape(), "cfa_sample");
    const int n = dem.dim(0), h = dem.dim(2), w = dem.dim(3);
    if (dem.dim(1) != 3) throw ShapeError("cfa_sample: expected 3 channels, got " + to_string(dem.shape()));
    if (h % 2 || w % 2) throw ShapeError("cfa_sample: spatial dims must be even, got " + to_string(dem.shape()));
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<T> out(static_cast<std::size_t>(n) * hw);
    auto src = dem.data();
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[b * hw + y * w + x] = src[(b * 3 + rggb_color(y, x)) * hw + y * w + x];
    return detail::make_result<T>({n, 1, h, w}, std::move(out), {&dem}, [n, h, w, hw](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int b = 0; b < n; ++b)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    p.grad[(b * 3 + rggb_color(y, x)) * hw + y * w + x] += self.grad[b * hw + y * w + x];
    });
}

namespace detail {

// Channel c, block offset (r, q) <-> channel 4c + 2r + q of the half-resolution tensor.
template <typename T, bool ToDepth>
void shuffle2(const T* src, T* dst, int n, int c, int h, int w) {
    const int hh = h / 2, hw2 = w / 2;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int r = 0; r < 2; ++r)
                for (int q = 0; q < 2; ++q) {
                    const int dc = ch * 4 + r * 2 + q;
                    for (int i = 0; i < hh; ++i)
                        for (int j = 0; j < hw2; ++j) {
                            const std::size_t full =
                                ((static_cast<std::size_t>(b) * c + ch) * h + 2 * i + r) * w + 2 * j + q;
                            const std::size_t half =
                                ((static_cast<std::size_t>(b) * 4 * c + dc) * hh + i) * hw2 + j;
                            if constexpr (ToDepth)
                                dst[half] += src[full];
                            else
                                dst[full] += src[half];
                        }
                }
}

}  // namespace detail

/// [N,C,H,W] -> [N,4C,H/2,W/2]; output channel 4c + 2r + q holds pixel (2i+r, 2j+q) of channel c.
template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& x) {
    detail::require_rank4(x.shape(), "space_to_depth");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 || w % 2) throw ShapeError("space_to_depth: spatial dims must be even, got " + to_string(x.shape()));
    std::vector<T> out(x.numel(), T(0));
    detail::shuffle2<T, true>(x.data().data(), out.data(), n, c, h, w);
    return detail::make_result<T>({n, 4 * c, h / 2, w / 2}, std::move(out), {&x}, [n, c, h, w](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        detail::shuffle2<T, false>(self.grad.data(), p.grad.data(), n, c, h, w);
    });
}

/// Pixel-shuffle upsampling by 2: [N,4C,h,w] -> [N,C,2h,2w], the inverse of space_to_depth.
template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x) {
    detail::require_rank4(x.shape(), "depth_to_space");
    const int n = x.dim(0), c4 = x.dim(1), hh = x.dim(2), ww = x.dim(3);
    if (c4 % 4) throw ShapeError("depth_to_space: channels must be a multiple of 4, got " + to_string(x.shape()));
    const int c = c4 / 4, h = hh * 2, w = ww * 2;
    std::vector<T> out(x.numel(), T(0));
    detail::shuffle2<T, false>(x.data().data(), out.data(), n, c, h, w);
    return detail::make_result<T>({n, c, h, w}, std::move(out), {&x}, [n, c, h, w](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        detail::shuffle2<T, true>(self.grad.data(), p.grad.data(), n, c, h, w);
    });
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x) { return depth_to_space(x); }

/// Packs an RGGB mosaic [N,1,H,W] into [N,4,H/2,W/2] with channel order R, G1, G2, B.
template <typename T>
Tensor<T> pack(const Tensor<T>& mosaic) {
    detail::require_rank4(mosaic.shape(), "pack");
    if (mosaic.dim(1) != 1) throw ShapeError("pack: expected a single-channel mosaic, got " + to_string(mosaic.shape()));
    return space_to_depth(mosaic);
}

/// Inverse of pack: [N,4,h,w] -> [N,1,2h,2w].
template <typename T>
Tensor<T> unpack(const Tensor<T>& packed) {
    detail::require_rank4(packed.shape(), "unpack");
    if (packed.dim(1) != 4) throw ShapeError("unpack: expected 4 channels, got " + to_string(packed.shape()));
    return depth_to_space(packed);
}

}  // namespace pseudoisp
