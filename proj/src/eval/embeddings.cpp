#include "fmtk/eval/embeddings.hpp"

#include <sstream>

#include <fmt/format.h>

#include "fmtk/common/io_util.hpp"
#include "fmtk/pipeline/train.hpp"

namespace fmtk {

void export_embeddings(Model& model, const Dataset& ds, const std::string& out_csv) {
  const SplitData data = load_rows(ds, ds.rows);
  const Tensor z = embed_split(model, data);
  std::vector<int> pred_overall;
  Tensor pred_details_probs;
  if (model.has_head_b()) pred_overall = predict_overall(model, data);
  if (model.has_head_a()) pred_details_probs = predict_details(model, data);

  std::ostringstream out;
  out << "image,split,overall,illum,clarity,contrast";
  for (int d = 0; d < model.config().embed_dim; ++d) out << ",z" << d;
  if (model.has_head_b()) out << ",pred_overall";
  if (model.has_head_a()) out << ",pred_illum,pred_clarity,pred_contrast";
  out << "\n";

  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    const ManifestRow& r = ds.rows[i];
    out << r.image << "," << split_name(r.split) << ",";
    if (r.overall) out << *r.overall;
    for (int j = 0; j < 3; ++j) {
      out << ",";
      if (r.details[static_cast<std::size_t>(j)]) out << *r.details[static_cast<std::size_t>(j)];
    }
    for (int d = 0; d < model.config().embed_dim; ++d) {
      out << fmt::format(",{:.17g}", z.at({static_cast<int>(i), d}));
    }
    if (model.has_head_b()) out << "," << pred_overall[i];
    if (model.has_head_a()) {
      for (int j = 0; j < 3; ++j) {
        out << fmt::format(",{:.17g}", pred_details_probs.at({static_cast<int>(i), j}));
      }
    }
    out << "\n";
  }
  write_file_atomic(out_csv, out.str());
}

}  // namespace fmtk
