#include "advaug/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace advaug {

namespace {

constexpr char kMagic[4] = {'a', 'a', 'u', 'g'};
constexpr uint32_t kVersion = 1;

void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

template <class T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof v);
}

void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(p), std::streamsize(n));
  if (size_t(is.gcount()) != n)
    throw FileError(std::string("checkpoint truncated reading ") + what);
}

template <class T>
T read_pod(std::istream& is, const char* what) {
  T v;
  read_bytes(is, &v, sizeof v, what);
  return v;
}

}  // namespace

Checkpoint::Entry& Checkpoint::fresh(const std::string& name, Kind kind) {
  if (index_.count(name)) throw StateError("duplicate checkpoint entry '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, kind, {}, {}, {}, {}, {}});
  return entries_.back();
}

const Checkpoint::Entry& Checkpoint::at(const std::string& name, Kind kind) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw StateError("checkpoint has no entry '" + name + "'");
  const Entry& e = entries_[it->second];
  if (e.kind != kind)
    throw StateError("checkpoint entry '" + name + "' has kind " +
                     std::to_string(e.kind) + ", wanted " + std::to_string(kind));
  return e;
}

void Checkpoint::put_str(const std::string& name, std::string v) {
  fresh(name, kStr).s = std::move(v);
}
void Checkpoint::put_f32(const std::string& name, std::vector<float> v) {
  fresh(name, kF32).f32 = std::move(v);
}
void Checkpoint::put_f64(const std::string& name, std::vector<double> v) {
  fresh(name, kF64).f64 = std::move(v);
}
void Checkpoint::put_i64(const std::string& name, std::vector<int64_t> v) {
  fresh(name, kI64).i64 = std::move(v);
}
void Checkpoint::put_u32(const std::string& name, std::vector<uint32_t> v) {
  fresh(name, kU32).u32 = std::move(v);
}

const std::string& Checkpoint::str(const std::string& name) const {
  return at(name, kStr).s;
}
const std::vector<float>& Checkpoint::f32(const std::string& name) const {
  return at(name, kF32).f32;
}
const std::vector<double>& Checkpoint::f64(const std::string& name) const {
  return at(name, kF64).f64;
}
const std::vector<int64_t>& Checkpoint::i64(const std::string& name) const {
  return at(name, kI64).i64;
}
const std::vector<uint32_t>& Checkpoint::u32(const std::string& name) const {
  return at(name, kU32).u32;
}

int64_t Checkpoint::get_int(const std::string& name) const {
  const auto& v = i64(name);
  if (v.size() != 1)
    throw StateError("checkpoint entry '" + name + "' is not a scalar");
  return v[0];
}

double Checkpoint::get_num(const std::string& name) const {
  const auto& v = f64(name);
  if (v.size() != 1)
    throw StateError("checkpoint entry '" + name + "' is not a scalar");
  return v[0];
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (auto& e : entries_) out.push_back(e.name);
  return out;
}

void Checkpoint::save(const std::string& path) const {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FileError("cannot write " + tmp);
    write_bytes(os, kMagic, 4);
    write_pod<uint32_t>(os, kVersion);
    write_pod<uint64_t>(os, entries_.size());
    for (auto& e : entries_) {
      write_pod<uint16_t>(os, uint16_t(e.name.size()));
      write_bytes(os, e.name.data(), e.name.size());
      write_pod<uint8_t>(os, uint8_t(e.kind));
      uint64_t bytes = 0;
      const void* payload = nullptr;
      switch (e.kind) {
        case kStr: bytes = e.s.size(); payload = e.s.data(); break;
        case kF32: bytes = e.f32.size() * 4; payload = e.f32.data(); break;
        case kF64: bytes = e.f64.size() * 8; payload = e.f64.data(); break;
        case kI64: bytes = e.i64.size() * 8; payload = e.i64.data(); break;
        case kU32: bytes = e.u32.size() * 4; payload = e.u32.data(); break;
      }
      write_pod<uint64_t>(os, bytes);
      if (bytes) write_bytes(os, payload, bytes);
    }
    if (!os) throw FileError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FileError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open checkpoint " + path);
  char magic[4];
  read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FileError(path + " is not a checkpoint file");
  uint32_t ver = read_pod<uint32_t>(is, "version");
  if (ver != kVersion)
    throw FileError(path + ": unsupported checkpoint version " + std::to_string(ver));
  uint64_t n = read_pod<uint64_t>(is, "entry count");
  Checkpoint ck;
  for (uint64_t i = 0; i < n; ++i) {
    uint16_t len = read_pod<uint16_t>(is, "name length");
    std::string name(len, '\0');
    read_bytes(is, name.data(), len, "name");
    uint8_t kind = read_pod<uint8_t>(is, "kind");
    uint64_t bytes = read_pod<uint64_t>(is, "payload size");
    switch (kind) {
      case kStr: {
        std::string s(bytes, '\0');
        read_bytes(is, s.data(), bytes, name.c_str());
        ck.put_str(name, std::move(s));
        break;
      }
      case kF32: {
        if (bytes % 4) throw FileError("entry '" + name + "': bad f32 payload size");
        std::vector<float> v(bytes / 4);
        read_bytes(is, v.data(), bytes, name.c_str());
        ck.put_f32(name, std::move(v));
        break;
      }
      case kF64: {
        if (bytes % 8) throw FileError("entry '" + name + "': bad f64 payload size");
        std::vector<double> v(bytes / 8);
        read_bytes(is, v.data(), bytes, name.c_str());
        ck.put_f64(name, std::move(v));
        break;
      }
      case kI64: {
        if (bytes % 8) throw FileError("entry '" + name + "': bad i64 payload size");
        std::vector<int64_t> v(bytes / 8);
        read_bytes(is, v.data(), bytes, name.c_str());
        ck.put_i64(name, std::move(v));
        break;
      }
      case kU32: {
        if (bytes % 4) throw FileError("entry '" + name + "': bad u32 payload size");
        std::vector<uint32_t> v(bytes / 4);
        read_bytes(is, v.data(), bytes, name.c_str());
        ck.put_u32(name, std::move(v));
        break;
      }
      default:
        throw FileError("entry '" + name + "': unknown kind " + std::to_string(kind));
    }
  }
  is.peek();
  if (!is.eof()) throw FileError(path + ": trailing bytes after last entry");
  return ck;
}

namespace {

void put_vec(Checkpoint& ck, const std::string& name, const std::vector<float>& v) {
  ck.put_f32(name, v);
}
void put_vec(Checkpoint& ck, const std::string& name, const std::vector<double>& v) {
  ck.put_f64(name, v);
}
void get_vec(const Checkpoint& ck, const std::string& name, std::vector<float>& v) {
  const auto& s = ck.f32(name);
  if (s.size() != v.size())
    throw StateError("checkpoint entry '" + name + "' has " +
                     std::to_string(s.size()) + " values, model wants " +
                     std::to_string(v.size()));
  v = s;
}
void get_vec(const Checkpoint& ck, const std::string& name, std::vector<double>& v) {
  const auto& s = ck.f64(name);
  if (s.size() != v.size())
    throw StateError("checkpoint entry '" + name + "' has " +
                     std::to_string(s.size()) + " values, model wants " +
                     std::to_string(v.size()));
  v = s;
}

}  // namespace

template <class T>
void put_params(Checkpoint& ck, const std::string& pfx,
                const std::vector<ParamRef<T>>& ps) {
  for (auto& p : ps) put_vec(ck, pfx + "." + p.name, *p.val);
}

template <class T>
void get_params(const Checkpoint& ck, const std::string& pfx,
                std::vector<ParamRef<T>>& ps) {
  for (auto& p : ps) get_vec(ck, pfx + "." + p.name, *p.val);
}

template <class T>
void put_buffers(Checkpoint& ck, const std::string& pfx,
                 const std::vector<BufRef<T>>& bs) {
  for (auto& b : bs) put_vec(ck, pfx + "." + b.name, *b.val);
}

template <class T>
void get_buffers(const Checkpoint& ck, const std::string& pfx,
                 std::vector<BufRef<T>>& bs) {
  for (auto& b : bs) get_vec(ck, pfx + "." + b.name, *b.val);
}

template <class T>
void put_adam(Checkpoint& ck, const std::string& pfx, const Adam<T>& opt,
              const std::vector<ParamRef<T>>& ps) {
  ck.put_int(pfx + ".t", opt.t);
  if (opt.m.empty()) return;
  if (opt.m.size() != ps.size())
    throw StateError(pfx + ": optimizer slots do not match the parameter list");
  for (size_t i = 0; i < ps.size(); ++i) {
    put_vec(ck, pfx + ".m." + ps[i].name, opt.m[i]);
    put_vec(ck, pfx + ".v." + ps[i].name, opt.v[i]);
  }
}

template <class T>
void get_adam(const Checkpoint& ck, const std::string& pfx, Adam<T>& opt,
              const std::vector<ParamRef<T>>& ps) {
  opt.t = ck.get_int(pfx + ".t");
  opt.m.clear();
  opt.v.clear();
  if (opt.t == 0 && !ck.has(pfx + ".m." + (ps.empty() ? "" : ps[0].name))) return;
  for (auto& p : ps) {
    std::vector<T> m(p.val->size()), v(p.val->size());
    get_vec(ck, pfx + ".m." + p.name, m);
    get_vec(ck, pfx + ".v." + p.name, v);
    opt.m.push_back(std::move(m));
    opt.v.push_back(std::move(v));
  }
}

template void put_params<float>(Checkpoint&, const std::string&,
                                const std::vector<ParamRef<float>>&);
template void get_params<float>(const Checkpoint&, const std::string&,
                                std::vector<ParamRef<float>>&);
template void put_buffers<float>(Checkpoint&, const std::string&,
                                 const std::vector<BufRef<float>>&);
template void get_buffers<float>(const Checkpoint&, const std::string&,
                                 std::vector<BufRef<float>>&);
template void put_adam<float>(Checkpoint&, const std::string&, const Adam<float>&,
                              const std::vector<ParamRef<float>>&);
template void get_adam<float>(const Checkpoint&, const std::string&, Adam<float>&,
                              const std::vector<ParamRef<float>>&);
template void put_params<double>(Checkpoint&, const std::string&,
                                 const std::vector<ParamRef<double>>&);
template void get_params<double>(const Checkpoint&, const std::string&,
                                 std::vector<ParamRef<double>>&);
template void put_buffers<double>(Checkpoint&, const std::string&,
                                  const std::vector<BufRef<double>>&);
template void get_buffers<double>(const Checkpoint&, const std::string&,
                                  std::vector<BufRef<double>>&);
template void put_adam<double>(Checkpoint&, const std::string&, const Adam<double>&,
                               const std::vector<ParamRef<double>>&);
template void get_adam<double>(const Checkpoint&, const std::string&, Adam<double>&,
                               const std::vector<ParamRef<double>>&);

}  // namespace advaug
