#include "estformer/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "estformer/ops.hpp"

namespace estformer {

// ---- MaskSpec ---------------------------------------------------------------

void MaskSpec::validate() const {
  const std::size_t c = montage.size();
  if (visible.empty()) throw std::invalid_argument("mask spec has no visible channels");
  std::vector<int> seen(c, 0);
  for (const auto* list : {&visible, &masked}) {
    if (!std::is_sorted(list->begin(), list->end())) throw std::invalid_argument("mask spec indices must ascend");
    for (auto i : *list) {
      if (i >= c) throw std::invalid_argument("mask spec index " + std::to_string(i) + " outside montage");
      if (seen[i]++) throw std::invalid_argument("mask spec index " + std::to_string(i) + " listed twice");
    }
  }
  if (visible.size() + masked.size() != c) throw std::invalid_argument("mask spec does not cover the montage");
}

MaskSpec MaskSpec::from_visible(ElectrodeMontage montage, std::vector<std::size_t> visible, int scale_factor,
                                int case_id) {
  std::sort(visible.begin(), visible.end());
  std::vector<std::size_t> masked;
  for (std::size_t i = 0, v = 0; i < montage.size(); ++i) {
    if (v < visible.size() && visible[v] == i) {
      ++v;
    } else {
      masked.push_back(i);
    }
  }
  MaskSpec spec{std::move(montage), std::move(visible), std::move(masked), scale_factor, case_id};
  spec.validate();
  return spec;
}

// ---- hyperparameters ----------------------------------------------------------

void Hyperparams::validate() const {
  if (!(alpha_s > 0.0) || !(alpha_t > 0.0)) throw std::invalid_argument("alpha_s and alpha_t must be positive");
  if (r_mlp == 0 || l_s == 0 || l_t == 0) throw std::invalid_argument("r_mlp, l_s and l_t must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (!(ln_eps > 0.0)) throw std::invalid_argument("ln_eps must be positive");
  if (!(position_scale > 0.0)) throw std::invalid_argument("position_scale must be positive");
  if (!(init_std > 0.0)) throw std::invalid_argument("init_std must be positive");
}

std::size_t sim_width(std::size_t t, double alpha_s) {
  auto w = static_cast<std::size_t>(std::llround(alpha_s * static_cast<double>(t)));
  w = std::max<std::size_t>(w, 6);
  return (w + 5) / 6 * 6;
}

std::size_t trm_width(std::size_t c, double alpha_t) {
  auto w = static_cast<std::size_t>(std::llround(alpha_t * static_cast<double>(c)));
  w = std::max<std::size_t>(w, 2);
  return (w + 1) / 2 * 2;
}

// ---- parameter tree ---------------------------------------------------------

namespace {

void push_linear(std::vector<NamedTensor>& out, const std::string& name, const LinearParams& p) {
  out.push_back({name + ".w", p.w});
  out.push_back({name + ".b", p.b});
}

void push_block(std::vector<NamedTensor>& out, const std::string& name, const TokenBlockParams& p) {
  out.push_back({name + ".ln1.gain", p.ln1.gain});
  out.push_back({name + ".ln1.bias", p.ln1.bias});
  out.push_back({name + ".msa.wq", p.msa.wq});
  out.push_back({name + ".msa.wk", p.msa.wk});
  out.push_back({name + ".msa.wv", p.msa.wv});
  out.push_back({name + ".msa.wo", p.msa.wo});
  out.push_back({name + ".ln2.gain", p.ln2.gain});
  out.push_back({name + ".ln2.bias", p.ln2.bias});
  push_linear(out, name + ".mlp.fc1", p.mlp.fc1);
  push_linear(out, name + ".mlp.fc2", p.mlp.fc2);
}

std::size_t block_count(std::size_t w, std::size_t r) { return 4 * w + 4 * w * w + 2 * r * w * w + (r + 1) * w; }
std::size_t linear_count(std::size_t in, std::size_t out) { return in * out + out; }

}  // namespace

std::vector<NamedTensor> ESTformerParams::parameters() const {
  std::vector<NamedTensor> out;
  push_linear(out, "sim.channel_embed", sim.channel_embed);
  out.push_back({"sim.mask_token", sim.mask_token});
  for (std::size_t i = 0; i < sim.encoder.size(); ++i) {
    push_block(out, "sim.encoder." + std::to_string(i) + ".tsab", sim.encoder[i].tsab);
    push_block(out, "sim.encoder." + std::to_string(i) + ".ssab", sim.encoder[i].ssab);
  }
  for (std::size_t i = 0; i < sim.decoder.size(); ++i) {
    push_block(out, "sim.decoder." + std::to_string(i) + ".tsab", sim.decoder[i].tsab);
    push_block(out, "sim.decoder." + std::to_string(i) + ".ssab", sim.decoder[i].ssab);
  }
  push_linear(out, "sim.out_proj", sim.out_proj);
  push_linear(out, "trm.time_embed", trm.time_embed);
  for (std::size_t i = 0; i < trm.stage1.size(); ++i) push_block(out, "trm.stage1." + std::to_string(i), trm.stage1[i]);
  for (std::size_t i = 0; i < trm.stage2.size(); ++i) push_block(out, "trm.stage2." + std::to_string(i), trm.stage2[i]);
  push_linear(out, "trm.out_proj", trm.out_proj);
  out.push_back({"loss.log_var_fmse", log_var_fmse, false});
  out.push_back({"loss.log_var_mae", log_var_mae, false});
  return out;
}

std::size_t ESTformerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

void ESTformerParams::set_requires_grad(bool on) {
  for (auto& p : parameters()) p.tensor.set_requires_grad(on);
}

void ESTformerParams::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

ESTformerParams ESTformerParams::clone() const {
  ESTformerParams c = *this;
  // Rebind every tensor handle in the copy to fresh storage.
  auto deep = [](Tensor& t) { t = t.clone(); };
  auto deep_linear = [&](LinearParams& l) {
    deep(l.w);
    deep(l.b);
  };
  auto deep_block = [&](TokenBlockParams& b) {
    deep(b.ln1.gain);
    deep(b.ln1.bias);
    deep(b.msa.wq);
    deep(b.msa.wk);
    deep(b.msa.wv);
    deep(b.msa.wo);
    deep(b.ln2.gain);
    deep(b.ln2.bias);
    deep_linear(b.mlp.fc1);
    deep_linear(b.mlp.fc2);
  };
  deep_linear(c.sim.channel_embed);
  deep(c.sim.mask_token);
  for (auto& cab : c.sim.encoder) {
    deep_block(cab.tsab);
    deep_block(cab.ssab);
  }
  for (auto& cab : c.sim.decoder) {
    deep_block(cab.tsab);
    deep_block(cab.ssab);
  }
  deep_linear(c.sim.out_proj);
  deep_linear(c.trm.time_embed);
  for (auto& b : c.trm.stage1) deep_block(b);
  for (auto& b : c.trm.stage2) deep_block(b);
  deep_linear(c.trm.out_proj);
  deep(c.log_var_fmse);
  deep(c.log_var_mae);
  return c;
}

std::size_t expected_parameter_count(std::size_t c_sr, std::size_t c_lr, std::size_t t, const Hyperparams& hp) {
  const std::size_t ds = sim_width(t, hp.alpha_s), dt = trm_width(c_sr, hp.alpha_t), r = hp.r_mlp;
  const std::size_t sim = linear_count(t, ds) + ds + hp.l_s * (block_count(c_lr, r) + block_count(ds, r)) +
                          hp.l_s * (block_count(c_sr, r) + block_count(ds, r)) + linear_count(ds, t);
  const std::size_t trm = linear_count(c_sr, dt) + 2 * hp.l_t * block_count(dt, r) + linear_count(dt, c_sr);
  return sim + trm + 2;
}

ESTformerParams init_params(const MaskSpec& spec, std::size_t t, const Hyperparams& hp, Rng& rng) {
  spec.validate();
  hp.validate();
  if (t == 0) throw std::invalid_argument("init_params: T must be positive");
  ESTformerParams p;
  p.hp = hp;
  p.c_sr = spec.c_sr();
  p.c_lr = spec.c_lr();
  p.t = t;
  p.d_sim = sim_width(t, hp.alpha_s);
  p.d_trm = trm_width(p.c_sr, hp.alpha_t);
  const double sd = hp.init_std;

  p.sim.channel_embed = init_linear(t, p.d_sim, rng, sd);
  p.sim.mask_token = Tensor({1, p.d_sim});
  for (double& v : p.sim.mask_token.mutable_values()) v = rng.normal(0.0, sd);
  for (std::size_t i = 0; i < hp.l_s; ++i) p.sim.encoder.push_back(init_cab(p.c_lr, p.d_sim, hp.r_mlp, rng, sd));
  for (std::size_t i = 0; i < hp.l_s; ++i) p.sim.decoder.push_back(init_cab(p.c_sr, p.d_sim, hp.r_mlp, rng, sd));
  p.sim.out_proj = init_linear(p.d_sim, t, rng, sd);
  p.sim.pe3d = pe_3d(spec.montage, p.d_sim, hp.position_scale);

  p.trm.time_embed = init_linear(p.c_sr, p.d_trm, rng, sd);
  for (std::size_t i = 0; i < hp.l_t; ++i) {
    p.trm.stage1.push_back(init_token_block(p.d_trm, kTsaHeads, hp.r_mlp, rng, sd));
  }
  for (std::size_t i = 0; i < hp.l_t; ++i) {
    p.trm.stage2.push_back(init_token_block(p.d_trm, kTsaHeads, hp.r_mlp, rng, sd));
  }
  p.trm.out_proj = init_linear(p.d_trm, p.c_sr, rng, sd);
  p.trm.pe1d = pe_1d(t, p.d_trm);

  p.log_var_fmse = Tensor({1}, 0.0);
  p.log_var_mae = Tensor({1}, 0.0);
  return p;
}

ForwardContext eval_context(const Hyperparams& hp) { return {false, 0.0, nullptr, hp.ln_eps}; }

ForwardContext train_context(const Hyperparams& hp, Rng& rng) { return {true, hp.dropout, &rng, hp.ln_eps}; }

// ---- forward ----------------------------------------------------------------

namespace {

void check_input(const ESTformerParams& p, const Tensor& x_lr, const MaskSpec& spec) {
  if (spec.c_sr() != p.c_sr || spec.c_lr() != p.c_lr) {
    throw ShapeError("mask spec (" + std::to_string(spec.c_lr()) + " of " + std::to_string(spec.c_sr()) +
                     " channels) does not match the model (" + std::to_string(p.c_lr) + " of " +
                     std::to_string(p.c_sr) + ")");
  }
  if (x_lr.rank() != 2 || x_lr.rows() != spec.c_lr() || x_lr.cols() != p.t) {
    throw ShapeError("low-resolution input " + shape_str(x_lr.shape()) + " should be [" +
                     std::to_string(spec.c_lr()) + "x" + std::to_string(p.t) + "]");
  }
}

// Row i of the result is row index[i] of concat(first, second).
std::vector<std::size_t> interleave_index(const MaskSpec& spec) {
  std::vector<std::size_t> idx(spec.c_sr());
  for (std::size_t j = 0; j < spec.visible.size(); ++j) idx[spec.visible[j]] = j;
  for (std::size_t j = 0; j < spec.masked.size(); ++j) idx[spec.masked[j]] = spec.visible.size() + j;
  return idx;
}

Tensor run_stage(const std::vector<CABParams>& cabs, const Tensor& in, const ForwardContext& ctx, bool outer) {
  Tensor h = in;
  for (const auto& cab : cabs) h = cab_forward(cab, h, ctx, outer);
  return ops::add(h, in);
}

Tensor run_stage(const std::vector<TSABParams>& blocks, const Tensor& in_time_major, const ForwardContext& ctx) {
  // Time-major input: rows are time steps, so the time-wise block runs its
  // attention directly over rows.
  Tensor h = in_time_major;
  for (const auto& b : blocks) h = token_block_forward(b, h, ctx);
  return ops::add(h, in_time_major);
}

}  // namespace

Tensor sim_forward(const ESTformerParams& p, const Tensor& x_lr, const MaskSpec& spec, const ForwardContext& ctx) {
  check_input(p, x_lr, spec);
  if (spec.masked.empty()) throw std::invalid_argument("sim_forward: spec has no masked channels");
  const Tensor pe_vis = ops::gather_rows(p.sim.pe3d.values, spec.visible);
  const Tensor embedded = ops::add(linear(p.sim.channel_embed, x_lr), pe_vis);
  const Tensor z_sim = run_stage(p.sim.encoder, embedded, ctx, p.hp.cab_outer_residual);

  const std::vector<std::size_t> zeros(spec.c_mask(), 0);
  const Tensor mask_rows = ops::gather_rows(p.sim.mask_token, zeros);
  const auto idx = interleave_index(spec);
  const Tensor full = ops::add(ops::gather_rows(ops::concat(z_sim, mask_rows, 0), idx), p.sim.pe3d.values);
  const Tensor decoded = run_stage(p.sim.decoder, full, ctx, p.hp.cab_outer_residual);
  return linear(p.sim.out_proj, ops::gather_rows(decoded, spec.masked));
}

Tensor trm_forward(const ESTformerParams& p, const Tensor& x_temp, const ForwardContext& ctx) {
  if (x_temp.rank() != 2 || x_temp.rows() != p.c_sr || x_temp.cols() != p.t) {
    throw ShapeError("trm_forward: input " + shape_str(x_temp.shape()) + " should be [" + std::to_string(p.c_sr) +
                     "x" + std::to_string(p.t) + "]");
  }
  const Tensor& pe = p.trm.pe1d.values;
  const Tensor embedded = ops::add(linear(p.trm.time_embed, ops::transpose(x_temp)), pe);
  const Tensor stage1 = run_stage(p.trm.stage1, embedded, ctx);
  const Tensor stage2 = run_stage(p.trm.stage2, ops::add(stage1, pe), ctx);
  return ops::transpose(linear(p.trm.out_proj, stage2));
}

Tensor merge_channels(const Tensor& x_lr, const Tensor& x_mask, const MaskSpec& spec) {
  if (x_lr.rank() != 2 || x_lr.rows() != spec.c_lr()) {
    throw ShapeError("merge_channels: visible block " + shape_str(x_lr.shape()) + " does not match " +
                     std::to_string(spec.c_lr()) + " visible channels");
  }
  const auto idx = interleave_index(spec);
  if (spec.masked.empty()) return ops::gather_rows(x_lr, idx);
  if (!x_mask.defined() || x_mask.rank() != 2 || x_mask.rows() != spec.c_mask() || x_mask.cols() != x_lr.cols()) {
    throw ShapeError("merge_channels: masked block does not match " + std::to_string(spec.c_mask()) +
                     " masked channels");
  }
  return ops::gather_rows(ops::concat(x_lr, x_mask, 0), idx);
}

Tensor estformer_forward(const ESTformerParams& p, const Tensor& x_lr, const MaskSpec& spec,
                         const ForwardContext& ctx) {
  const Tensor x_mask = sim_forward(p, x_lr, spec, ctx);
  const Tensor y = trm_forward(p, merge_channels(x_lr, x_mask, spec), ctx);
  // Visible rows are copied from the input, masked rows come from the TRM.
  std::vector<std::size_t> idx(spec.c_sr());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t j = 0; j < spec.visible.size(); ++j) idx[spec.visible[j]] = spec.c_sr() + j;
  return ops::gather_rows(ops::concat(y, x_lr, 0), idx);
}

// ---- checkpoints ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'E', 'S', 'T', 'F'};

CheckpointMeta meta_for(const ESTformerParams& p, const MaskSpec& spec) {
  CheckpointMeta m;
  m.reals = {{"alpha_s", p.hp.alpha_s},     {"alpha_t", p.hp.alpha_t},
             {"dropout", p.hp.dropout},     {"ln_eps", p.hp.ln_eps},
             {"position_scale", p.hp.position_scale}, {"init_std", p.hp.init_std}};
  m.counts = {{"r_mlp", static_cast<std::uint32_t>(p.hp.r_mlp)},
              {"l_s", static_cast<std::uint32_t>(p.hp.l_s)},
              {"l_t", static_cast<std::uint32_t>(p.hp.l_t)},
              {"cab_outer_residual", p.hp.cab_outer_residual ? 1u : 0u},
              {"c_sr", static_cast<std::uint32_t>(p.c_sr)},
              {"c_lr", static_cast<std::uint32_t>(p.c_lr)},
              {"t", static_cast<std::uint32_t>(p.t)},
              {"d_sim", static_cast<std::uint32_t>(p.d_sim)},
              {"d_trm", static_cast<std::uint32_t>(p.d_trm)},
              {"scale_factor", static_cast<std::uint32_t>(spec.scale_factor)},
              {"mask_case", static_cast<std::uint32_t>(spec.case_id)}};
  return m;
}

}  // namespace

std::string encode_checkpoint(const ESTformerParams& p, const MaskSpec& spec) {
  detail::ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kCheckpointVersion);
  const CheckpointMeta meta = meta_for(p, spec);
  w.u32(static_cast<std::uint32_t>(meta.reals.size() + meta.counts.size()));
  for (const auto& [name, v] : meta.reals) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u8(0);
    w.f64(v);
  }
  for (const auto& [name, v] : meta.counts) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u8(1);
    w.u32(v);
  }
  const auto params = p.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& np : params) {
    w.u32(static_cast<std::uint32_t>(np.name.size()));
    w.raw(np.name);
    w.u32(static_cast<std::uint32_t>(np.tensor.rank()));
    for (auto d : np.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : np.tensor.values()) w.f64(v);
  }
  return w.take();
}

void save_checkpoint(const std::filesystem::path& path, const ESTformerParams& p, const MaskSpec& spec) {
  const std::string bytes = encode_checkpoint(p, spec);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint decode_checkpoint(const std::string& bytes) {
  detail::ByteReader<CheckpointError> r(bytes);
  if (r.raw(4) != std::string_view(kMagic, 4)) throw CheckpointError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  LoadedCheckpoint ck;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string name(r.raw(r.u32()));
    const std::uint8_t kind = r.u8();
    if (kind == 0) {
      ck.meta.reals[name] = r.f64();
    } else if (kind == 1) {
      ck.meta.counts[name] = r.u32();
    } else {
      throw CheckpointError("unknown hyperparameter kind " + std::to_string(kind));
    }
  }
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name(r.raw(r.u32()));
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 3) throw CheckpointError("tensor '" + name + "' has invalid rank");
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(r.u32());
      n *= shape.back();
    }
    if (n == 0 || r.remaining() / 8 < n) throw CheckpointError("truncated tensor '" + name + "'");
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint");
  return ck;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

namespace {
template <typename Map>
auto need(const Map& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw CheckpointError("checkpoint missing hyperparameter '" + key + "'");
  return it->second;
}
}  // namespace

Hyperparams LoadedCheckpoint::hp() const {
  Hyperparams hp;
  hp.alpha_s = need(meta.reals, "alpha_s");
  hp.alpha_t = need(meta.reals, "alpha_t");
  hp.dropout = need(meta.reals, "dropout");
  hp.ln_eps = need(meta.reals, "ln_eps");
  hp.position_scale = need(meta.reals, "position_scale");
  hp.init_std = need(meta.reals, "init_std");
  hp.r_mlp = need(meta.counts, "r_mlp");
  hp.l_s = need(meta.counts, "l_s");
  hp.l_t = need(meta.counts, "l_t");
  hp.cab_outer_residual = need(meta.counts, "cab_outer_residual") != 0;
  return hp;
}

int LoadedCheckpoint::scale_factor() const { return static_cast<int>(need(meta.counts, "scale_factor")); }
int LoadedCheckpoint::mask_case() const { return static_cast<int>(need(meta.counts, "mask_case")); }

ESTformerParams restore_params(const LoadedCheckpoint& ckpt, const MaskSpec& spec) {
  const auto t = need(ckpt.meta.counts, "t");
  if (need(ckpt.meta.counts, "c_sr") != spec.c_sr() || need(ckpt.meta.counts, "c_lr") != spec.c_lr()) {
    throw CheckpointError("checkpoint channel layout does not match the mask spec");
  }
  Rng rng(0);
  ESTformerParams p = init_params(spec, t, ckpt.hp(), rng);
  auto params = p.parameters();
  if (params.size() != ckpt.tensors.size()) throw CheckpointError("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, stored] = ckpt.tensors[i];
    if (name != params[i].name || stored.shape() != params[i].tensor.shape()) {
      throw CheckpointError("checkpoint tensor '" + name + "' does not match '" + params[i].name + "' " +
                            shape_str(params[i].tensor.shape()));
    }
    std::copy(stored.values().begin(), stored.values().end(), params[i].tensor.mutable_values().begin());
  }
  return p;
}

}  // namespace estformer
