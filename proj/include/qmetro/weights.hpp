#pragma once

// Actor weights for the neural feedback policy and their on-disk container.
//
// Binary container (all integers and floats little-endian):
//
//   offset 0  char[4]  magic "QMWT"
//          4  u32      format version (1)
//          8  u32      record count N
//   then N records, each:
//          char[16] tag, NUL padded ASCII
//          u32      dtype: 1 = f64, 2 = u32, 3 = utf8 bytes
//          u32      rank
//          u64[rank] dims
//          payload: prod(dims) elements of dtype, row-major
//
// Required tags: "sizes" (u32 [L+1]), "activation" (utf8), and for every
// layer k in 0..L-1 "w<k>" (f64 [sizes[k+1], sizes[k]]) and "b<k>"
// (f64 [sizes[k+1]]). Optional: "log_std" (f64 [1]), "obs_layout" (u32 [1]),
// "obs_offset" and "obs_scale" (f64 [sizes[0]]), "obs_clip" (f64 [1]).
//
// A JSON variant with the same field names is accepted as well; see
// docs/weight_format.md.

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qmetro/kernels.hpp"

namespace qmetro {

class WeightFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Affine input normalization x = clip((obs - offset) / scale).
struct ObsNormalization {
  std::vector<double> offset;
  std::vector<double> scale;
  /// Symmetric clip applied after scaling; 0 disables clipping.
  double clip = 0.0;

  friend bool operator==(const ObsNormalization&, const ObsNormalization&) = default;
};

struct NeuralWeights {
  std::vector<std::size_t> sizes;             // e.g. {11, 64, 64, 1}
  std::vector<std::vector<double>> weights;   // per layer, row-major [out][in]
  std::vector<std::vector<double>> biases;    // per layer, [out]
  kernels::Activation activation = kernels::Activation::tanh;
  std::optional<double> log_std;
  std::optional<ObsNormalization> normalization;
  int obs_layout = 1;

  /// Throws WeightFormatError on shape mismatch or non-finite entries.
  void validate() const;

  std::vector<kernels::DenseView> layer_views() const;
  std::size_t max_width() const;

  friend bool operator==(const NeuralWeights&, const NeuralWeights&) = default;
};

std::string activation_name(kernels::Activation act);
kernels::Activation parse_activation(const std::string& name);

NeuralWeights load_weights(const std::filesystem::path& path);
NeuralWeights parse_weights(std::span<const unsigned char> bytes);
NeuralWeights parse_weights_json(const std::string& text);

void save_weights(const std::filesystem::path& path, const NeuralWeights& weights);
std::vector<unsigned char> serialize_weights(const NeuralWeights& weights);
std::string serialize_weights_json(const NeuralWeights& weights);

/// Human-readable listing of the records of a binary container with their
/// byte offsets.
std::string describe_weights_file(std::span<const unsigned char> bytes);

}  // namespace qmetro
