#include "qamatch/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "qamatch/errors.hpp"
#include "qamatch/random.hpp"

namespace qamatch {

namespace {

constexpr std::uint64_t kGradcheckTag = 0x6c4;
const char32_t kAlphabet[] = U"甲乙丙丁戊己庚辛壬癸";

std::string random_text(Rng& rng, std::size_t max_chars) {
  std::uniform_int_distribution<std::size_t> len(1, max_chars);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kAlphabet) - 2);
  std::u32string s;
  for (std::size_t n = len(rng); n > 0; --n) s += kAlphabet[pick(rng)];
  return utf8_encode(s);
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

GradcheckResult gradcheck(ModelConfig cfg, std::uint64_t seed, double step) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  std::vector<std::string> corpus = {utf8_encode(std::u32string(kAlphabet))};
  Vocabulary vocab = build_vocab(corpus);
  cfg.vocab_size = vocab.size();
  Model model = Model::create(cfg, vocab, seed);

  Rng rng = make_rng(seed, {kGradcheckTag});
  for (auto& nt : model.params().named()) {
    Tensor noise(nt.tensor->shape());
    fill_uniform(noise, rng, 0.1);
    for (std::size_t i = 0; i < noise.size(); ++i) (*nt.tensor)[i] += noise[i];
  }

  // Texts leave room for PAD so masking paths are exercised.
  const std::size_t max_chars = std::max<std::size_t>(1, cfg.max_len > 4 ? cfg.max_len - 4 : 1);
  const LossConfig loss{1.0};
  EncodedSequence q, pos, neg;
  auto eval = [&](bool backward) {
    Tape tape(backward);
    auto p = model.forward(tape, q, pos);
    auto n = model.forward(tape, q, neg);
    Var l = margin_loss(cosine(p.question, p.answer), cosine(n.question, n.answer), loss);
    if (backward) tape.backward(l);
    return l.item();
  };

  GradcheckResult result;
  for (int attempt = 0; attempt < 100 && result.loss == 0.0; ++attempt) {
    const std::string tq = random_text(rng, max_chars), tp = random_text(rng, max_chars),
                      tn = random_text(rng, max_chars);
    // equal positive and negative texts cancel and leave every gradient at zero
    if (tp == tn || tq == tp || tq == tn) continue;
    q = model.encode(tq);
    pos = model.encode(tp);
    neg = model.encode(tn);
    result.loss = eval(false);
  }
  if (result.loss == 0.0) throw ContractError("gradcheck could not find a triplet with positive loss");

  model.params().set_requires_grad(true);
  model.params().zero_grad();
  eval(true);

  for (auto& nt : model.params().named()) {
    Tensor& t = *nt.tensor;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + step;
      const double up = eval(false);
      t[i] = saved - step;
      const double down = eval(false);
      t[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(t.grad()[i], numeric);
      ++result.checked;
      if (err > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = err;
        result.worst_param = nt.path;
        result.worst_index = i;
        result.worst_analytic = t.grad()[i];
        result.worst_numeric = numeric;
      }
    }
  }
  model.params().set_requires_grad(false);
  return result;
}

}  // namespace qamatch
