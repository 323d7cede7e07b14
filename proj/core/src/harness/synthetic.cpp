#include "byteshot/harness/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "byteshot/checkpoint.hpp"
#include "byteshot/error.hpp"
#include "byteshot/rng.hpp"

namespace byteshot::harness {

namespace {

// Vocabulary and signatures are fixed across seeds so corpora generated with
// different seeds come from the same family.
constexpr std::uint64_t kFamilySeed = 0x6279746573686f74ULL;

constexpr std::size_t kHeaderBytes = 128;

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + uniform_index(rng, hi - lo + 1);
}

Bytes make_header() {
  Bytes h(kHeaderBytes, 0);
  h[0] = 'M';
  h[1] = 'Z';
  h[2] = 0x90;
  h[4] = 0x03;
  h[8] = 0x04;
  h[12] = 0xFF;
  h[13] = 0xFF;
  h[16] = 0xB8;
  h[24] = 0x40;
  h[0x3C] = 0x40;
  const char stub[] = "This program cannot be run in DOS mode.";
  std::copy(stub, stub + sizeof(stub) - 1, h.begin() + 0x4E);
  h[0x40] = 'P';
  h[0x41] = 'E';
  return h;
}

std::vector<std::string> make_words() {
  static constexpr std::array<const char*, 24> syllables = {
      "ka", "lo", "mer", "sti", "on", "dra", "vel", "ix", "tor", "ne", "pa", "qui",
      "ser", "ba", "gen", "ut", "fo", "rem", "cal", "dex", "hi", "mon", "ro", "ta"};
  Rng rng(derive_seed(kFamilySeed, "words"));
  std::vector<std::string> words;
  for (int w = 0; w < 96; ++w) {
    std::string word;
    const std::size_t parts = between(rng, 2, 4);
    for (std::size_t p = 0; p < parts; ++p) word += syllables[uniform_index(rng, syllables.size())];
    words.push_back(std::move(word));
  }
  return words;
}

const std::vector<std::string>& words() {
  static const std::vector<std::string> w = make_words();
  return w;
}

Bytes category_motif(CategoryLabel c, std::size_t which) {
  Rng rng(derive_seed(kFamilySeed, "motif/" + std::string(to_string(c)) + "/" + std::to_string(which)));
  Bytes m(16);
  for (auto& b : m) b = static_cast<std::uint8_t>(rng() & 0xFF);
  return m;
}

void append_text(Bytes& out, std::size_t len, Rng& rng) {
  const auto& w = words();
  std::string s;
  while (s.size() < len) {
    const auto& a = w[uniform_index(rng, w.size())];
    const auto& b = w[uniform_index(rng, w.size())];
    switch (uniform_index(rng, 3)) {
      case 0: s += a + "_" + b + " = " + std::to_string(uniform_index(rng, 1000)) + ";\n"; break;
      case 1: s += "<" + a + " name=\"" + b + "\" />\n"; break;
      default: s += a + " " + b + " " + w[uniform_index(rng, w.size())] + ".\n"; break;
    }
  }
  out.insert(out.end(), s.begin(), s.begin() + static_cast<std::ptrdiff_t>(len));
}

void append_code(Bytes& out, std::size_t len, Rng& rng) {
  const std::size_t end = out.size() + len;
  while (out.size() < end) {
    const std::uint8_t imm = static_cast<std::uint8_t>(uniform_index(rng, 16) * 4);
    switch (uniform_index(rng, 8)) {
      case 0: out.insert(out.end(), {0x55, 0x48, 0x89, 0xE5}); break;
      case 1: out.insert(out.end(), {0x48, 0x8B, 0x45, imm}); break;
      case 2: out.insert(out.end(), {0x48, 0x89, 0x45, imm}); break;
      case 3: out.insert(out.end(), {0xE8, imm, 0x00, 0x00, 0x00}); break;
      case 4: out.insert(out.end(), {0x83, 0xC0, static_cast<std::uint8_t>(imm / 4)}); break;
      case 5: out.insert(out.end(), {0x5D, 0xC3}); break;
      case 6: out.insert(out.end(), {0x90, 0x90}); break;
      default: out.insert(out.end(), {0x31, 0xC0, 0x74, imm}); break;
    }
  }
  out.resize(end);
}

void append_random(Bytes& out, std::size_t len, Rng& rng) {
  for (std::size_t i = 0; i < len; ++i) out.push_back(static_cast<std::uint8_t>(rng() & 0xFF));
}

Bytes synthesize_file(const ClassByteProfile& profile, std::optional<CategoryLabel> category,
                      std::size_t target, Rng& rng) {
  Bytes out = make_header();
  target = std::max(target, kHeaderBytes + 16);
  const double total = profile.random_share + profile.text_share + profile.code_share + profile.zero_share;
  while (out.size() < target) {
    const double pick = uniform_unit(rng) * total;
    const std::size_t room = target - out.size();
    if (pick < profile.random_share) {
      append_random(out, std::min(room, between(rng, 256, 1024)), rng);
    } else if (pick < profile.random_share + profile.text_share) {
      append_text(out, std::min(room, between(rng, 128, 768)), rng);
    } else if (pick < profile.random_share + profile.text_share + profile.code_share) {
      append_code(out, std::min(room, between(rng, 128, 768)), rng);
    } else {
      out.insert(out.end(), std::min(room, between(rng, 32, 256)), 0);
    }
  }
  if (category) {
    for (std::size_t m = 0; m < profile.motifs_per_file; ++m) {
      const Bytes motif = category_motif(*category, m % 3);
      const std::size_t at = between(rng, kHeaderBytes, out.size() - motif.size());
      std::copy(motif.begin(), motif.end(), out.begin() + static_cast<std::ptrdiff_t>(at));
    }
  }
  return out;
}

std::string sample_name(std::string_view prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return std::string(prefix) + "-" + digits;
}

}  // namespace

SyntheticCorpusSpec SyntheticCorpusSpec::desk(std::size_t num_benign, std::size_t per_category,
                                              std::uint64_t seed) {
  SyntheticCorpusSpec s;
  s.num_benign = num_benign;
  s.seed = seed;
  s.benign_profile = {0.0, 0.45, 0.4, 0.15, 0};
  s.malicious_profile = {0.45, 0.0, 0.4, 0.15, 4};
  for (auto c : kAllCategories) s.num_malicious_per_category[c] = per_category;
  s.length_range_bytes = {
      {CategoryLabel::Adware, {4096, 10240}},     {CategoryLabel::Backdoor, {10240, 24576}},
      {CategoryLabel::Botnet, {5120, 12288}},     {CategoryLabel::Dropper, {1536, 4096}},
      {CategoryLabel::Ransomware, {10240, 24576}}, {CategoryLabel::Rootkit, {5120, 12288}},
      {CategoryLabel::Spyware, {4096, 10240}},    {CategoryLabel::Virus, {2048, 5120}},
  };
  return s;
}

void SyntheticCorpusSpec::validate() const {
  auto check_range = [](const SizeRange& r, std::string_view what) {
    if (r.min_bytes > r.max_bytes || r.max_bytes == 0)
      throw Error(ErrorCode::InvalidConfig, "bad length range for " + std::string(what));
  };
  auto check_profile = [](const ClassByteProfile& p) {
    for (double v : {p.random_share, p.text_share, p.code_share, p.zero_share})
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidConfig, "negative profile share");
    if (p.random_share + p.text_share + p.code_share + p.zero_share <= 0.0)
      throw Error(ErrorCode::InvalidConfig, "profile shares sum to zero");
  };
  check_range(benign_length, "benign");
  check_profile(benign_profile);
  check_profile(malicious_profile);
  for (const auto& [c, n] : num_malicious_per_category) {
    if (n == 0) continue;
    const auto it = length_range_bytes.find(c);
    if (it == length_range_bytes.end())
      throw Error(ErrorCode::InvalidConfig, "no length range for " + std::string(to_string(c)));
    check_range(it->second, to_string(c));
  }
  if (!(min_divergence >= 0.0)) throw Error(ErrorCode::InvalidConfig, "min_divergence must be >= 0");
}

std::vector<double> mean_byte_histogram(std::span<const Bytes> files) {
  std::vector<double> mean(256, 0.0);
  if (files.empty()) return mean;
  for (const auto& f : files) {
    if (f.empty()) continue;
    std::array<std::size_t, 256> counts{};
    for (auto b : f) ++counts[b];
    for (int i = 0; i < 256; ++i) mean[i] += static_cast<double>(counts[i]) / static_cast<double>(f.size());
  }
  for (auto& v : mean) v /= static_cast<double>(files.size());
  return mean;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorCode::InvalidConfig, "distribution sizes differ");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) d += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) d += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return d;
}

SyntheticCorpus synthesize_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  SyntheticCorpus corpus;
  std::vector<Bytes> benign, malicious;
  for (std::size_t i = 0; i < spec.num_benign; ++i) {
    ManifestEntry e;
    e.sample_id = sample_name("benign", i);
    e.path = "benign/" + e.sample_id + ".bin";
    e.label = SampleLabel::Benign;
    Rng rng(derive_seed(spec.seed, e.sample_id));
    const std::size_t len = between(rng, spec.benign_length.min_bytes, spec.benign_length.max_bytes);
    benign.push_back(synthesize_file(spec.benign_profile, std::nullopt, len, rng));
    corpus.manifest.entries.push_back(std::move(e));
    corpus.files.push_back(benign.back());
  }
  for (const auto& [c, n] : spec.num_malicious_per_category) {
    const std::string cat(to_string(c));
    for (std::size_t i = 0; i < n; ++i) {
      ManifestEntry e;
      e.sample_id = sample_name(cat, i);
      e.path = "malicious/" + cat + "/" + e.sample_id + ".bin";
      e.label = SampleLabel::Malicious;
      e.category = c;
      Rng rng(derive_seed(spec.seed, e.sample_id));
      const auto& r = spec.length_range_bytes.at(c);
      malicious.push_back(synthesize_file(spec.malicious_profile, c, between(rng, r.min_bytes, r.max_bytes), rng));
      corpus.manifest.entries.push_back(std::move(e));
      corpus.files.push_back(malicious.back());
    }
  }
  if (!benign.empty() && !malicious.empty()) {
    corpus.divergence = js_divergence(mean_byte_histogram(benign), mean_byte_histogram(malicious));
    if (corpus.divergence < spec.min_divergence) {
      throw Error(ErrorCode::InvalidConfig, "class divergence " + std::to_string(corpus.divergence) +
                                                " below floor " + std::to_string(spec.min_divergence));
    }
  }
  return corpus;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::filesystem::path& out_dir) {
  SyntheticCorpus corpus = synthesize_corpus(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < corpus.files.size(); ++i) {
    const auto path = out_dir / corpus.manifest.entries[i].path;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + path.parent_path().string());
    write_file_bytes(path, corpus.files[i]);
  }
  save_manifest(corpus.manifest, out_dir / "manifest.json");
  return corpus;
}

}  // namespace byteshot::harness
