#include "nldf/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "nldf/errors.hpp"

namespace nldf::io {

using json = nlohmann::json;

namespace {

template <typename S>
const char* dtype_name() {
  return sizeof(S) == 4 ? "float32" : "float64";
}

json read_header(std::ifstream& in, const std::filesystem::path& path) {
  std::string magic;
  size_t header_bytes = 0;
  in >> magic >> header_bytes;
  if (magic != "NLDFCKPT1") throw DomainError(path.string() + ": not a checkpoint file");
  in.get();  // newline
  std::string header(header_bytes, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_bytes));
  if (static_cast<size_t>(in.gcount()) != header_bytes)
    throw DomainError(path.string() + ": truncated header");
  return json::parse(header);
}

}  // namespace

template <typename S>
void save_checkpoint(const std::filesystem::path& path, student::NldfModel<S>& model,
                     cond::FusionModule<S>& fusion, std::uint64_t seed, std::int64_t step) {
  std::vector<nn::Parameter<S>*> params = model.params();
  if (!fusion.empty()) fusion.collect(params);

  json tensors = json::array();
  for (const auto* p : params)
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows}, {"cols", p->value.cols}});

  const auto& cfg = model.config;
  json header{{"dtype", dtype_name<S>()},
              {"seed", seed},
              {"step", step},
              {"model",
               {{"beam_points", cfg.beam_points},
                {"segments", cfg.segments},
                {"blocks", cfg.blocks},
                {"width", cfg.width},
                {"conditioning_dim", cfg.conditioning_dim},
                {"norm_center",
                 {model.norm_center.x(), model.norm_center.y(), model.norm_center.z()}},
                {"norm_half_extent",
                 {model.norm_half_extent.x(), model.norm_half_extent.y(),
                  model.norm_half_extent.z()}}}},
              {"fusion",
               {{"out_dim", fusion.out_dim},
                {"raw_dim", fusion.raw_dim},
                {"half_width", fusion.half_width}}},
              {"tensors", tensors}};
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot open " + path.string() + " for writing");
  out << "NLDFCKPT1 " << header_str.size() << "\n" << header_str;
  for (const auto* p : params)
    out.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(S)));
}

template <typename S>
CheckpointBundle<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open " + path.string());
  const json header = read_header(in, path);

  CheckpointBundle<S> bundle;
  bundle.seed = header.at("seed").get<std::uint64_t>();
  bundle.step = header.at("step").get<std::int64_t>();

  const json& jm = header.at("model");
  student::NldfConfig cfg;
  cfg.beam_points = jm.at("beam_points").get<int>();
  cfg.segments = jm.at("segments").get<int>();
  cfg.blocks = jm.at("blocks").get<int>();
  cfg.width = jm.at("width").get<int>();
  cfg.conditioning_dim = jm.at("conditioning_dim").get<int>();
  bundle.model = student::NldfModel<S>(cfg);
  for (int i = 0; i < 3; ++i) {
    bundle.model.norm_center[i] = jm.at("norm_center").at(i).get<double>();
    bundle.model.norm_half_extent[i] = jm.at("norm_half_extent").at(i).get<double>();
  }

  const json& jf = header.at("fusion");
  const int fusion_out = jf.at("out_dim").get<int>();
  if (fusion_out > 0)
    bundle.fusion = cond::FusionModule<S>(fusion_out, jf.at("raw_dim").get<int>(),
                                          jf.at("half_width").get<int>());

  std::vector<nn::Parameter<S>*> params = bundle.model.params();
  if (!bundle.fusion.empty()) bundle.fusion.collect(params);
  const json& tensors = header.at("tensors");
  if (tensors.size() != params.size())
    throw DomainError(path.string() + ": tensor table does not match model layout");

  const std::string stored_dtype = header.at("dtype").get<std::string>();
  for (size_t i = 0; i < params.size(); ++i) {
    nn::Parameter<S>* p = params[i];
    const json& t = tensors.at(i);
    if (t.at("rows").get<int>() != p->value.rows || t.at("cols").get<int>() != p->value.cols)
      throw DomainError(path.string() + ": shape mismatch for tensor " + p->name);
    const size_t count = p->value.size();
    if (stored_dtype == dtype_name<S>()) {
      in.read(reinterpret_cast<char*>(p->value.data.data()),
              static_cast<std::streamsize>(count * sizeof(S)));
    } else if (stored_dtype == "float32") {
      std::vector<float> raw(count);
      in.read(reinterpret_cast<char*>(raw.data()),
              static_cast<std::streamsize>(count * sizeof(float)));
      for (size_t k = 0; k < count; ++k) p->value.data[k] = static_cast<S>(raw[k]);
    } else if (stored_dtype == "float64") {
      std::vector<double> raw(count);
      in.read(reinterpret_cast<char*>(raw.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
      for (size_t k = 0; k < count; ++k) p->value.data[k] = static_cast<S>(raw[k]);
    } else {
      throw DomainError(path.string() + ": unknown dtype " + stored_dtype);
    }
    if (!in) throw DomainError(path.string() + ": truncated payload");
  }
  return bundle;
}

std::string checkpoint_dtype(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open " + path.string());
  return read_header(in, path).at("dtype").get<std::string>();
}

template void save_checkpoint<float>(const std::filesystem::path&, student::NldfModel<float>&,
                                     cond::FusionModule<float>&, std::uint64_t, std::int64_t);
template void save_checkpoint<double>(const std::filesystem::path&, student::NldfModel<double>&,
                                      cond::FusionModule<double>&, std::uint64_t, std::int64_t);
template CheckpointBundle<float> load_checkpoint<float>(const std::filesystem::path&);
template CheckpointBundle<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace nldf::io
