#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "atb/arch.hpp"
#include "atb/model.hpp"
#include "atb/tensor.hpp"

namespace atb {

// Maximal architecture the one-shot parameter store is allocated at. Every
// searchable architecture must fit under it.
struct SuperConfig {
  ArchConfig arch;  // paper scale: {8, 768, 768, 768, 768, 3072, 768, 12}
  std::size_t vocab = 0;
  std::size_t max_seq = 0;
};

SuperConfig desk_super_config();  // small default used by tests and examples

struct SuperNet {
  SuperConfig config;
  ParamMap params;  // model tensors at maximal dims, plus "kd_proj" when present
};

SuperNet build_supernet(const SuperConfig& config, std::uint64_t seed);

// Adds the shared student->teacher hidden projection used by the distillation
// objective ([super d_m x teacher d_m], row-sliced per sub-model).
void add_kd_projection(SuperNet& net, std::size_t teacher_d_m, std::uint64_t seed);

// The two MHA width-extraction strategies: keep per-head width and take the
// first heads, or keep every head and take a column prefix inside each head
// block (required when attention maps are distilled against a teacher with
// the same head count).
enum class ExtractStrategy { HEAD_PREFIX, PER_HEAD_SLICE };

const char* strategy_name(ExtractStrategy s);
ExtractStrategy strategy_from_name(const std::string& name);

// Ordered, disjoint [begin, end) index ranges along one axis.
struct AxisSpans {
  std::vector<std::pair<std::size_t, std::size_t>> spans;

  std::size_t total() const;
  // Offset within the concatenated view -> index in the source axis.
  std::size_t map_index(std::size_t target) const;
  bool subset_of(const AxisSpans& outer) const;
};

struct TensorSlice {
  AxisSpans rows;
  AxisSpans cols;  // empty for rank-1 tensors
  bool is_matrix = true;
};

// Mapping from one architecture to index ranges of the supernet tensors.
// View shapes equal the shapes of a stand-alone model of the same arch.
struct SubModelView {
  ArchConfig arch;
  ExtractStrategy strategy = ExtractStrategy::HEAD_PREFIX;
  std::map<std::string, TensorSlice> slices;
};

// Depth prefix + width prefixes per Figure-3 semantics. PER_HEAD_SLICE
// requires arch.h == super.h; HEAD_PREFIX requires the per-head widths to
// match the supernet's.
SubModelView extract_submodel(const SuperNet& net, const ArchConfig& arch,
                              ExtractStrategy strategy);

// Reads the current supernet values through the view (block copies).
ParamMap gather(const SuperNet& net, const SubModelView& view);

// Stand-alone model snapshot; walks each target element through the view's
// index mapping, independently of gather()'s block loops.
Model materialize(const SuperNet& net, const SubModelView& view);

// Adds sub-model gradients into the supernet-shaped buffer at exactly the
// slices the view reads. Untouched elements are left as-is.
void scatter_gradients(const SubModelView& view, const ParamMap& sub_grads,
                       ParamMap& super_buffer);

}  // namespace atb
