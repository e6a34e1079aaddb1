#include "fop/fopmodel.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fop/dataio.hpp"
#include "fop/errors.hpp"

namespace fop {

std::string to_string(Fusion f) {
  return f == Fusion::gated ? "gated" : "linear";
}

Fusion parse_fusion(const std::string& token) {
  if (token == "gated") return Fusion::gated;
  if (token == "linear") return Fusion::linear;
  throw DataError("unknown fusion token '" + token + "'");
}

void FopParams::check_shapes() const {
  const Index d = dims.embed_dim;
  auto expect = [](bool ok, const char* what) {
    if (!ok) throw ContractError(std::string("FopParams: bad shape for ") + what);
  };
  expect(w_face.rows() == dims.face_dim && w_face.cols() == d, "w_face");
  expect(b_face.size() == d, "b_face");
  expect(w_voice.rows() == dims.voice_dim && w_voice.cols() == d, "w_voice");
  expect(b_voice.size() == d, "b_voice");
  expect(static_cast<int>(w_att.size()) == dims.att_layers &&
             w_att.size() == b_att.size(),
         "attention layer count");
  for (std::size_t i = 0; i < w_att.size(); ++i) {
    const Index in = i == 0 ? 2 * d : d;
    expect(w_att[i].rows() == in && w_att[i].cols() == d, "w_att");
    expect(b_att[i].size() == d, "b_att");
  }
  expect(w_cls.rows() == d && w_cls.cols() == dims.n_classes, "w_cls");
}

namespace {

void fill_glorot(Matrix& w, Rng& rng, double gain = 1.0) {
  const double a = gain * std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-a, a);
}

Matrix normalize_rows(const Matrix& a, Vector& raw_norms) {
  raw_norms = a.rowwise().norm();
  const Vector clamped = raw_norms.cwiseMax(kNormEps);
  return (a.array().colwise() / clamped.array()).matrix();
}

}  // namespace

FopParams init_params(const FopDims& dims, Fusion fusion, Rng& rng, double att_init_gain) {
  if (dims.face_dim < 1 || dims.voice_dim < 1 || dims.embed_dim < 1 || dims.n_classes < 1)
    throw ContractError("init_params: all dims must be >= 1");
  if (dims.att_layers < 1) throw ContractError("init_params: att_layers must be >= 1");
  if (att_init_gain <= 0) throw ContractError("init_params: att_init_gain must be > 0");
  FopParams p;
  p.dims = dims;
  p.fusion = fusion;
  const Index d = dims.embed_dim;
  p.w_face = Matrix(dims.face_dim, d);
  p.b_face = Vector::Zero(d);
  p.w_voice = Matrix(dims.voice_dim, d);
  p.b_voice = Vector::Zero(d);
  fill_glorot(p.w_face, rng);
  fill_glorot(p.w_voice, rng);
  for (int i = 0; i < dims.att_layers; ++i) {
    const Index in = i == 0 ? 2 * d : d;
    Matrix w(in, d);
    fill_glorot(w, rng, att_init_gain);
    p.w_att.push_back(std::move(w));
    p.b_att.push_back(Vector::Zero(d));
  }
  p.w_cls = Matrix(d, dims.n_classes);
  fill_glorot(p.w_cls, rng);
  return p;
}

std::pair<Vector, Vector> project(const FopParams& p, const Vector& face_embedding,
                                  const Vector& voice_embedding) {
  if (face_embedding.size() != p.dims.face_dim || voice_embedding.size() != p.dims.voice_dim)
    throw ContractError("project: embedding dims " + std::to_string(face_embedding.size()) +
                        "/" + std::to_string(voice_embedding.size()) + " do not match params " +
                        std::to_string(p.dims.face_dim) + "/" + std::to_string(p.dims.voice_dim));
  Vector u = l2_normalize(p.w_face.transpose() * face_embedding + p.b_face);
  Vector v = l2_normalize(p.w_voice.transpose() * voice_embedding + p.b_voice);
  return {std::move(u), std::move(v)};
}

std::pair<Vector, Vector> fuse_gated(const FopParams& p, const Vector& u, const Vector& v) {
  const Index d = p.dims.embed_dim;
  if (u.size() != d || v.size() != d) throw ContractError("fuse_gated: bad input length");
  Vector h(2 * d);
  h << u, v;
  for (std::size_t i = 0; i + 1 < p.w_att.size(); ++i)
    h = (p.w_att[i].transpose() * h + p.b_att[i]).array().tanh();
  const Vector k = sigmoid(Vector(p.w_att.back().transpose() * h + p.b_att.back()));
  const Vector l =
      (k.array() * u.array().tanh() + (1.0 - k.array()) * v.array().tanh()).matrix();
  return {l, k};
}

Vector fuse_linear(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw ContractError("fuse_linear: length mismatch");
  return 0.5 * (u.array().tanh() + v.array().tanh()).matrix();
}

Vector logits(const FopParams& p, const Vector& fused) {
  if (fused.size() != p.dims.embed_dim) throw ContractError("logits: bad input length");
  return p.w_cls.transpose() * fused;
}

ForwardCache forward(const FopParams& p, const Matrix& face_batch, const Matrix& voice_batch) {
  p.check_shapes();
  if (face_batch.cols() != p.dims.face_dim || voice_batch.cols() != p.dims.voice_dim ||
      face_batch.rows() != voice_batch.rows())
    throw ContractError("forward: batch shapes " + std::to_string(face_batch.rows()) + "x" +
                        std::to_string(face_batch.cols()) + " / " +
                        std::to_string(voice_batch.rows()) + "x" +
                        std::to_string(voice_batch.cols()) + " do not match params");
  ForwardCache c;
  c.af = (face_batch * p.w_face).rowwise() + p.b_face.transpose();
  c.av = (voice_batch * p.w_voice).rowwise() + p.b_voice.transpose();
  c.u = normalize_rows(c.af, c.rf);
  c.v = normalize_rows(c.av, c.rv);
  c.tu = c.u.array().tanh().matrix();
  c.tv = c.v.array().tanh().matrix();

  if (p.fusion == Fusion::gated) {
    const Index d = p.dims.embed_dim;
    Matrix h(face_batch.rows(), 2 * d);
    h.leftCols(d) = c.u;
    h.rightCols(d) = c.v;
    for (std::size_t i = 0; i + 1 < p.w_att.size(); ++i) {
      h = ((h * p.w_att[i]).rowwise() + p.b_att[i].transpose()).array().tanh();
      c.att_h.push_back(h);
    }
    c.gate = sigmoid(Matrix(((h * p.w_att.back()).rowwise() + p.b_att.back().transpose())));
    c.fused = (c.gate.array() * c.tu.array() + (1.0 - c.gate.array()) * c.tv.array()).matrix();
  } else {
    c.fused = 0.5 * (c.tu + c.tv);
  }
  c.logits = c.fused * p.w_cls;
  return c;
}

namespace {

void write_tensor(std::ofstream& out, const char* name, const Matrix& m) {
  out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
    out << '\n';
  }
}

Matrix read_tensor(std::ifstream& in, const std::string& path, long& lineno,
                   const std::string& name, Index rows, Index cols) {
  std::string line;
  if (!std::getline(in, line))
    throw DataError(path + ":" + std::to_string(lineno + 1) + ": unexpected end of file");
  ++lineno;
  std::istringstream hs(line);
  std::string tag, got;
  long r = -1, c = -1;
  hs >> tag >> got >> r >> c;
  if (tag != "tensor" || got != name || r != rows || c != cols || !(hs >> std::ws).eof())
    throw DataError(path + ":" + std::to_string(lineno) + ": expected 'tensor " + name + " " +
                    std::to_string(rows) + " " + std::to_string(cols) + "', got '" + line + "'");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!std::getline(in, line))
      throw DataError(path + ":" + std::to_string(lineno + 1) + ": unexpected end of file");
    ++lineno;
    const char* ptr = line.data();
    const char* end = line.data() + line.size();
    for (Index j = 0; j < cols; ++j) {
      while (ptr < end && *ptr == ' ') ++ptr;
      double v = 0.0;
      auto res = std::from_chars(ptr, end, v);
      if (res.ec != std::errc{} || !std::isfinite(v))
        throw DataError(path + ":" + std::to_string(lineno) + ": bad value in tensor " + name);
      m(i, j) = v;
      ptr = res.ptr;
    }
    while (ptr < end && *ptr == ' ') ++ptr;
    if (ptr != end)
      throw DataError(path + ":" + std::to_string(lineno) + ": trailing garbage in tensor row");
  }
  return m;
}

}  // namespace

void save_params(const FopParams& p, const std::string& path) {
  p.check_shapes();
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "FVPARAMS 1 " << p.dims.face_dim << ' ' << p.dims.voice_dim << ' ' << p.dims.embed_dim
      << ' ' << p.dims.n_classes << ' ' << to_string(p.fusion) << ' ' << p.dims.att_layers
      << '\n';
  write_tensor(out, "w_face", p.w_face);
  write_tensor(out, "b_face", p.b_face.transpose());
  write_tensor(out, "w_voice", p.w_voice);
  write_tensor(out, "b_voice", p.b_voice.transpose());
  for (std::size_t i = 0; i < p.w_att.size(); ++i) {
    const std::string wn = "w_att" + std::to_string(i);
    const std::string bn = "b_att" + std::to_string(i);
    write_tensor(out, wn.c_str(), p.w_att[i]);
    write_tensor(out, bn.c_str(), p.b_att[i].transpose());
  }
  write_tensor(out, "w_cls", p.w_cls);
  if (!out) throw DataError("write failed for '" + path + "'");
}

FopParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw DataError(path + ":1: missing header");
  ++lineno;
  std::istringstream hs(line);
  std::string magic, version, fusion_tok;
  long F = -1, V = -1, d = -1, C = -1, layers = -1;
  hs >> magic >> version >> F >> V >> d >> C >> fusion_tok >> layers;
  if (magic != "FVPARAMS" || version != "1" || F < 1 || V < 1 || d < 1 || C < 1 || layers < 1 ||
      !(hs >> std::ws).eof())
    throw DataError(path + ":1: bad header '" + line + "'");

  FopParams p;
  p.dims = {F, V, d, C, static_cast<int>(layers)};
  p.fusion = parse_fusion(fusion_tok);
  p.w_face = read_tensor(in, path, lineno, "w_face", F, d);
  p.b_face = read_tensor(in, path, lineno, "b_face", 1, d).transpose();
  p.w_voice = read_tensor(in, path, lineno, "w_voice", V, d);
  p.b_voice = read_tensor(in, path, lineno, "b_voice", 1, d).transpose();
  for (long i = 0; i < layers; ++i) {
    const Index inDim = i == 0 ? 2 * d : d;
    p.w_att.push_back(
        read_tensor(in, path, lineno, "w_att" + std::to_string(i), inDim, d));
    p.b_att.push_back(
        Vector(read_tensor(in, path, lineno, "b_att" + std::to_string(i), 1, d).transpose()));
  }
  p.w_cls = read_tensor(in, path, lineno, "w_cls", d, C);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty())
      throw DataError(path + ":" + std::to_string(lineno) + ": trailing garbage");
  }
  p.check_shapes();
  return p;
}

}  // namespace fop
