#include <fstream>
#include <sstream>

#include "matrn/config.hpp"

namespace matrn {

std::string to_string(FeVariant v) {
  switch (v) {
    case FeVariant::None: return "none";
    case FeVariant::Semantic: return "semantic";
    case FeVariant::Visual: return "visual";
    case FeVariant::Multimodal: return "multimodal";
  }
  return "?";
}

std::string to_string(SesMode m) {
  switch (m) {
    case SesMode::None: return "none";
    case SesMode::SequentialPe: return "sequential_pe";
    case SesMode::Ses: return "ses";
  }
  return "?";
}

std::string to_string(MaskMode m) {
  switch (m) {
    case MaskMode::None: return "none";
    case MaskMode::Semantic: return "semantic";
    case MaskMode::VisualRandom: return "visual_random";
    case MaskMode::VisualClue: return "visual_clue";
  }
  return "?";
}

FeVariant fe_variant_from_string(const std::string& s) {
  if (s == "none") return FeVariant::None;
  if (s == "semantic") return FeVariant::Semantic;
  if (s == "visual") return FeVariant::Visual;
  if (s == "multimodal") return FeVariant::Multimodal;
  throw ConfigError("unknown fe_variant '" + s + "'");
}

SesMode ses_mode_from_string(const std::string& s) {
  if (s == "none") return SesMode::None;
  if (s == "sequential_pe") return SesMode::SequentialPe;
  if (s == "ses") return SesMode::Ses;
  throw ConfigError("unknown ses_mode '" + s + "'");
}

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "none") return MaskMode::None;
  if (s == "semantic") return MaskMode::Semantic;
  if (s == "visual_random") return MaskMode::VisualRandom;
  if (s == "visual_clue") return MaskMode::VisualClue;
  throw ConfigError("unknown mask_mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (iters < 1) throw ConfigError("M (iters) must be >= 1");
  if (d_model % 4 != 0) throw ConfigError("d_model must be divisible by 4");
  if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  if (img_h % 4 != 0 || img_w % 4 != 0)
    throw ConfigError("image dims must be divisible by 4, got " + std::to_string(img_h) + "x" +
                      std::to_string(img_w));
  if ((img_h / 4) % 2 != 0 && (img_h / 4) != 1)
    throw ConfigError("feature map height must be even for the mini U-Net");
  if (backbone_widths.size() != 4) throw ConfigError("backbone_widths needs 4 entries");
  if (t_max < 2) throw ConfigError("T must be >= 2");
  if (random_mask_prob < 0.0 || random_mask_prob > 1.0)
    throw ConfigError("random_mask_prob must be in [0,1]");
  const int k = effective_k();
  if (k < 1 || k > visual_len()) throw ConfigError("K out of range [1, HW/16]");
  if (precision != "f32" && precision != "f64")
    throw ConfigError("precision must be f32 or f64");
}

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  std::istringstream in(ss.str());
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == '[') continue;  // sections are cosmetic
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    kv[key] = val;
  }
  return kv;
}

namespace {
int to_int(const std::string& k, const std::string& v) {
  try {
    size_t pos;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + k + "': expected integer, got '" + v + "'");
  }
}
double to_double(const std::string& k, const std::string& v) {
  try {
    size_t pos;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + k + "': expected number, got '" + v + "'");
  }
}
bool to_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + k + "': expected bool, got '" + v + "'");
}
}  // namespace

void apply_config(const std::map<std::string, std::string>& kv, TrainConfig& cfg) {
  for (const auto& [k, v] : kv) {
    if (k == "d_model") cfg.d_model = to_int(k, v);
    else if (k == "t_max") cfg.t_max = to_int(k, v);
    else if (k == "iters") cfg.iters = to_int(k, v);
    else if (k == "heads") cfg.heads = to_int(k, v);
    else if (k == "vision_blocks") cfg.vision_blocks = to_int(k, v);
    else if (k == "fe_blocks") cfg.fe_blocks = to_int(k, v);
    else if (k == "lm_blocks") cfg.lm_blocks = to_int(k, v);
    else if (k == "ffn_mult") cfg.ffn_mult = to_int(k, v);
    else if (k == "img_h") cfg.img_h = to_int(k, v);
    else if (k == "img_w") cfg.img_w = to_int(k, v);
    else if (k == "img_c") cfg.img_c = to_int(k, v);
    else if (k == "k_mask") cfg.k_mask = to_int(k, v);
    else if (k == "fe_variant") cfg.fe_variant = fe_variant_from_string(v);
    else if (k == "ses_mode") cfg.ses_mode = ses_mode_from_string(v);
    else if (k == "mask_mode") cfg.mask_mode = mask_mode_from_string(v);
    else if (k == "share_ps") cfg.share_ps = to_bool(k, v);
    else if (k == "lm_diag_mask") cfg.lm_diag_mask = to_bool(k, v);
    else if (k == "modality_embed") cfg.modality_embed = to_bool(k, v);
    else if (k == "random_mask_prob") cfg.random_mask_prob = to_double(k, v);
    else if (k == "keep_prob") cfg.keep_prob = to_double(k, v);
    else if (k == "precision") cfg.precision = v;
    else if (k == "batch_size") cfg.batch_size = to_int(k, v);
    else if (k == "lr") cfg.lr = to_double(k, v);
    else if (k == "lr_decay_epoch") cfg.lr_decay_epoch = to_int(k, v);
    else if (k == "epochs") cfg.epochs = to_int(k, v);
    else if (k == "seed") cfg.seed = static_cast<uint64_t>(to_int(k, v));
    else if (k == "lexicon_size") cfg.lexicon_size = to_int(k, v);
    else if (k == "per_word") cfg.per_word = to_int(k, v);
    else if (k == "val_fraction") cfg.val_fraction = to_double(k, v);
    else if (k == "aug_strength") cfg.aug_strength = to_double(k, v);
    else if (k == "backbone_widths") {
      std::vector<int> widths;
      std::istringstream ws(v);
      std::string tok;
      while (std::getline(ws, tok, ',')) widths.push_back(to_int(k, tok));
      cfg.backbone_widths = widths;
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  cfg.validate();
}

std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "[model]\n";
  os << "d_model = " << cfg.d_model << "\n";
  os << "t_max = " << cfg.t_max << "\n";
  os << "iters = " << cfg.iters << "\n";
  os << "heads = " << cfg.heads << "\n";
  os << "vision_blocks = " << cfg.vision_blocks << "\n";
  os << "fe_blocks = " << cfg.fe_blocks << "\n";
  os << "lm_blocks = " << cfg.lm_blocks << "\n";
  os << "ffn_mult = " << cfg.ffn_mult << "\n";
  os << "img_h = " << cfg.img_h << "\n";
  os << "img_w = " << cfg.img_w << "\n";
  os << "img_c = " << cfg.img_c << "\n";
  os << "backbone_widths = ";
  for (size_t i = 0; i < cfg.backbone_widths.size(); ++i)
    os << (i ? "," : "") << cfg.backbone_widths[i];
  os << "\n";
  os << "k_mask = " << cfg.k_mask << "\n";
  os << "fe_variant = " << to_string(cfg.fe_variant) << "\n";
  os << "ses_mode = " << to_string(cfg.ses_mode) << "\n";
  os << "mask_mode = " << to_string(cfg.mask_mode) << "\n";
  os << "share_ps = " << (cfg.share_ps ? "true" : "false") << "\n";
  os << "lm_diag_mask = " << (cfg.lm_diag_mask ? "true" : "false") << "\n";
  os << "modality_embed = " << (cfg.modality_embed ? "true" : "false") << "\n";
  os << "random_mask_prob = " << cfg.random_mask_prob << "\n";
  os << "keep_prob = " << cfg.keep_prob << "\n";
  os << "precision = " << cfg.precision << "\n";
  os << "[train]\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "lr = " << cfg.lr << "\n";
  os << "lr_decay_epoch = " << cfg.lr_decay_epoch << "\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "lexicon_size = " << cfg.lexicon_size << "\n";
  os << "per_word = " << cfg.per_word << "\n";
  os << "val_fraction = " << cfg.val_fraction << "\n";
  os << "aug_strength = " << cfg.aug_strength << "\n";
  return os.str();
}

TrainConfig config_from_string(const std::string& text) {
  TrainConfig cfg;
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == '[') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("bad config line '" + t + "'");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  apply_config(kv, cfg);
  return cfg;
}

}  // namespace matrn
