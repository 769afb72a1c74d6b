#pragma once

#include <string>

#include "fmtk/data/manifest.hpp"
#include "fmtk/model/model.hpp"

namespace fmtk {

// One CSV row per dataset row: sample id, split, every available label,
// the shared embedding z, and the model's predictions. Raw material for
// external projection tools (t-SNE and friends).
void export_embeddings(Model& model, const Dataset& ds, const std::string& out_csv);

}  // namespace fmtk
