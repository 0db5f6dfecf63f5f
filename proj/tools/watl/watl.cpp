#include "watl.hpp"

#include <cstring>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace watl {

namespace {

// Opcode byte table, shared standard data.
const std::map<std::string, uint8_t>& opcode_bytes() {
  static const auto* m = [] {
    auto* t = new std::map<std::string, uint8_t>();
#define WS_OP(name, byte, mnemonic, imm) (*t)[mnemonic] = byte;
#include "wasmshade/opcodes.def"
#undef WS_OP
    return t;
  }();
  return *m;
}

struct Line {
  int number;
  std::vector<std::string> tokens;
};

[[noreturn]] void fail(int line, const std::string& msg) {
  throw std::runtime_error("watl line " + std::to_string(line) + ": " + msg);
}

std::vector<Line> tokenize(const std::string& source) {
  std::vector<Line> lines;
  std::istringstream in(source);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    std::vector<std::string> tokens;
    size_t i = 0;
    while (i < raw.size()) {
      char c = raw[i];
      if (c == ';') break;  // comment to end of line
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (c == '"') {
        size_t j = raw.find('"', i + 1);
        if (j == std::string::npos) fail(number, "unterminated string");
        tokens.push_back(raw.substr(i, j - i + 1));  // keep the quotes
        i = j + 1;
        continue;
      }
      if (c == '(' || c == ')') {
        tokens.push_back(std::string(1, c));
        ++i;
        continue;
      }
      size_t j = i;
      while (j < raw.size() && !std::isspace(static_cast<unsigned char>(raw[j])) &&
             raw[j] != '(' && raw[j] != ')' && raw[j] != ';' && raw[j] != '"')
        ++j;
      tokens.push_back(raw.substr(i, j - i));
      i = j;
    }
    if (!tokens.empty()) lines.push_back({number, std::move(tokens)});
  }
  return lines;
}

std::string unquote(int line, const std::string& tok) {
  if (tok.size() < 2 || tok.front() != '"' || tok.back() != '"')
    fail(line, "expected a quoted string, got " + tok);
  return tok.substr(1, tok.size() - 2);
}

uint8_t valtype_byte(int line, const std::string& t) {
  if (t == "i32") return 0x7F;
  if (t == "i64") return 0x7E;
  if (t == "f32") return 0x7D;
  if (t == "f64") return 0x7C;
  fail(line, "unknown value type " + t);
}

// ---- byte emission ---------------------------------------------------------

struct Buf {
  std::vector<uint8_t> out;

  void b(uint8_t v) { out.push_back(v); }
  void raw(const std::vector<uint8_t>& v) {
    out.insert(out.end(), v.begin(), v.end());
  }
  void u(uint64_t v) {
    do {
      uint8_t x = v & 0x7F;
      v >>= 7;
      if (v) x |= 0x80;
      out.push_back(x);
    } while (v);
  }
  void s(int64_t v) {
    bool more = true;
    while (more) {
      uint8_t x = v & 0x7F;
      v >>= 7;
      if ((v == 0 && !(x & 0x40)) || (v == -1 && (x & 0x40))) more = false;
      else x |= 0x80;
      out.push_back(x);
    }
  }
  void str(const std::string& s) {
    u(s.size());
    out.insert(out.end(), s.begin(), s.end());
  }
};

// ---- assembler state -------------------------------------------------------

struct Signature {
  std::vector<uint8_t> params, results;
  bool operator<(const Signature& o) const {
    return std::tie(params, results) < std::tie(o.params, o.results);
  }
};

struct FuncDecl {
  std::string name;           // $name or empty
  std::string export_name;    // empty if not exported
  uint32_t type_index = 0;
  std::vector<uint8_t> locals;  // expanded valtype bytes
  std::vector<Line> body;
};

struct GlobalDecl {
  std::string name;
  uint8_t type = 0x7F;
  bool mut = false;
  std::string literal;  // init literal, parsed at emit time
  int line = 0;
};

struct DataDecl {
  uint32_t offset = 0;
  std::vector<uint8_t> bytes;
};

struct ExportDecl {
  std::string name;
  uint8_t kind;
  std::string target;  // $name (func/global) or "0"
  int line;
};

class Assembler {
 public:
  Assembled run(const std::string& source) {
    auto lines = tokenize(source);
    size_t i = 0;
    while (i < lines.size()) i = directive(lines, i);

    Buf out;
    static const uint8_t header[] = {0, 'a', 's', 'm', 1, 0, 0, 0};
    out.out.assign(header, header + 8);
    emit_types(out);
    emit_imports(out);
    emit_funcdecls(out);
    emit_table(out);
    emit_memory(out);
    emit_globals(out);
    emit_exports(out);
    emit_start(out);
    emit_elem(out);
    emit_code(out);
    emit_data(out);

    Assembled a;
    a.module_name = module_name_;
    a.label = label_;
    a.bytes = std::move(out.out);
    return a;
  }

 private:
  // ---- pass 1: structure ---------------------------------------------------

  size_t directive(const std::vector<Line>& lines, size_t i) {
    const Line& L = lines[i];
    const auto& t = L.tokens;
    const std::string& head = t[0];
    if (head == "module") {
      need(L, 2);
      module_name_ = t[1];
      return i + 1;
    }
    if (head == "label") {
      need(L, 2);
      if (t[1] != "miner" && t[1] != "benign")
        fail(L.number, "label must be miner or benign");
      label_ = t[1];
      return i + 1;
    }
    if (head == "import") return import_directive(L), i + 1;
    if (head == "memory") {
      need(L, 2);
      memory_min_ = num(L, t[1]);
      if (t.size() > 2) memory_max_ = num(L, t[2]);
      has_memory_ = true;
      return i + 1;
    }
    if (head == "table") {
      need(L, 2);
      table_min_ = num(L, t[1]);
      if (t.size() > 2) table_max_ = num(L, t[2]);
      has_table_ = true;
      return i + 1;
    }
    if (head == "global") return global_directive(L), i + 1;
    if (head == "data") return data_directive(L), i + 1;
    if (head == "elem") {
      need(L, 3);
      elem_offset_ = num(L, t[1]);
      for (size_t k = 2; k < t.size(); ++k) elem_funcs_.push_back(t[k]);
      elem_line_ = L.number;
      has_elem_ = true;
      return i + 1;
    }
    if (head == "start") {
      need(L, 2);
      start_func_ = t[1];
      start_line_ = L.number;
      return i + 1;
    }
    if (head == "export") {
      // export "name" memory | table | global $g | func $f
      need(L, 3);
      ExportDecl e;
      e.name = unquote(L.number, t[1]);
      e.line = L.number;
      if (t[2] == "memory") e.kind = 2, e.target = "0";
      else if (t[2] == "table") e.kind = 1, e.target = "0";
      else if (t[2] == "global") need(L, 4), e.kind = 3, e.target = t[3];
      else if (t[2] == "func") need(L, 4), e.kind = 0, e.target = t[3];
      else fail(L.number, "bad export kind " + t[2]);
      exports_.push_back(e);
      return i + 1;
    }
    if (head == "func") return func_directive(lines, i);
    fail(L.number, "unknown directive " + head);
  }

  void need(const Line& L, size_t n) {
    if (L.tokens.size() < n) fail(L.number, "missing operand(s)");
  }

  uint32_t num(const Line& L, const std::string& tok) {
    try {
      size_t pos = 0;
      unsigned long v = std::stoul(tok, &pos, 0);
      if (pos != tok.size()) throw std::invalid_argument("trail");
      return static_cast<uint32_t>(v);
    } catch (...) {
      fail(L.number, "expected a number, got " + tok);
    }
  }

  // Optional (param t*) then optional (result t*) starting at tokens[k];
  // returns the index after whatever was consumed.
  size_t signature(const Line& L, size_t k, Signature& sig) {
    for (int part = 0; part < 2; ++part) {
      const char* kw = part == 0 ? "param" : "result";
      auto& dst = part == 0 ? sig.params : sig.results;
      if (k + 1 < L.tokens.size() && L.tokens[k] == "(" &&
          L.tokens[k + 1] == kw) {
        k += 2;
        while (k < L.tokens.size() && L.tokens[k] != ")")
          dst.push_back(valtype_byte(L.number, L.tokens[k])), ++k;
        if (k >= L.tokens.size()) fail(L.number, "missing )");
        ++k;
      }
    }
    return k;
  }

  uint32_t intern(const Signature& sig) {
    auto it = type_index_.find(sig);
    if (it != type_index_.end()) return it->second;
    uint32_t idx = static_cast<uint32_t>(types_.size());
    types_.push_back(sig);
    type_index_[sig] = idx;
    return idx;
  }

  void import_directive(const Line& L) {
    need(L, 2);
    const auto& t = L.tokens;
    if (!funcs_.empty()) fail(L.number, "imports must precede func definitions");
    if (t[1] == "func") {
      // import func $name mod field (param ...) (result ...)
      need(L, 5);
      Signature sig;
      signature(L, 5, sig);
      import_funcs_.push_back({t[3], t[4], intern(sig)});
      func_names_[t[2]] = static_cast<uint32_t>(import_funcs_.size() - 1);
      return;
    }
    if (t[1] == "global") {
      // import global $name mod field [mut] type
      need(L, 6);
      GlobalDecl g;
      g.name = t[2];
      size_t k = 5;
      if (t[k] == "mut") g.mut = true, ++k;
      need(L, k + 1);
      g.type = valtype_byte(L.number, t[k]);
      import_globals_.push_back({t[3], t[4], g});
      global_names_[g.name] =
          static_cast<uint32_t>(import_globals_.size() - 1);
      return;
    }
    if (t[1] == "memory") {
      // import memory mod field min [max]
      need(L, 5);
      import_memory_ = {t[2], t[3]};
      memory_min_ = num(L, t[4]);
      if (t.size() > 5) memory_max_ = num(L, t[5]);
      return;
    }
    fail(L.number, "unknown import kind " + t[1]);
  }

  void global_directive(const Line& L) {
    // global $name [mut] type literal
    need(L, 4);
    const auto& t = L.tokens;
    GlobalDecl g;
    g.name = t[1];
    g.line = L.number;
    size_t k = 2;
    if (t[k] == "mut") g.mut = true, ++k;
    need(L, k + 2);
    g.type = valtype_byte(L.number, t[k]);
    g.literal = t[k + 1];
    global_names_[g.name] =
        static_cast<uint32_t>(import_globals_.size() + globals_.size());
    globals_.push_back(g);
  }

  void data_directive(const Line& L) {
    // data <offset> hex AABB.. | data <offset> str "text"
    need(L, 4);
    const auto& t = L.tokens;
    DataDecl d;
    d.offset = num(L, t[1]);
    if (t[2] == "hex") {
      const std::string& h = t[3];
      if (h.size() % 2) fail(L.number, "odd hex digest length");
      for (size_t k = 0; k < h.size(); k += 2) {
        auto nib = [&](char c) -> int {
          if (c >= '0' && c <= '9') return c - '0';
          if (c >= 'a' && c <= 'f') return c - 'a' + 10;
          if (c >= 'A' && c <= 'F') return c - 'A' + 10;
          fail(L.number, "bad hex digit");
        };
        d.bytes.push_back(nib(h[k]) * 16 + nib(h[k + 1]));
      }
    } else if (t[2] == "str") {
      std::string s = unquote(L.number, t[3]);
      d.bytes.assign(s.begin(), s.end());
    } else {
      fail(L.number, "data payload must be hex or str");
    }
    datas_.push_back(std::move(d));
  }

  size_t func_directive(const std::vector<Line>& lines, size_t i) {
    const Line& L = lines[i];
    const auto& t = L.tokens;
    need(L, 2);
    FuncDecl f;
    f.name = t[1];
    size_t k = 2;
    if (k < t.size() && t[k] == "export") {
      need(L, k + 2);
      f.export_name = unquote(L.number, t[k + 1]);
      k += 2;
    }
    Signature sig;
    k = signature(L, k, sig);
    f.type_index = intern(sig);
    if (k < t.size() && t[k] == "(") {
      if (t[k + 1] != "local") fail(L.number, "expected (local ...)");
      k += 2;
      while (k < t.size() && t[k] != ")")
        f.locals.push_back(valtype_byte(L.number, t[k])), ++k;
      ++k;
    }
    func_names_[f.name] =
        static_cast<uint32_t>(import_funcs_.size() + funcs_.size());

    // Body: consume lines until nesting depth returns to zero.
    size_t j = i + 1;
    int depth = 1;
    while (j < lines.size()) {
      const std::string& head = lines[j].tokens[0];
      f.body.push_back(lines[j]);
      if (head == "block" || head == "loop" || head == "if") depth++;
      else if (head == "end") {
        depth--;
        if (depth == 0) break;
      }
      ++j;
    }
    if (depth != 0) fail(L.number, "function body not closed by end");
    funcs_.push_back(std::move(f));
    return j + 1;
  }

  // ---- pass 2: emission ----------------------------------------------------

  void section(Buf& out, uint8_t id, Buf& payload) {
    out.b(id);
    out.u(payload.out.size());
    out.raw(payload.out);
  }

  void emit_types(Buf& out) {
    if (types_.empty()) return;
    Buf s;
    s.u(types_.size());
    for (const auto& ty : types_) {
      s.b(0x60);
      s.u(ty.params.size());
      for (uint8_t v : ty.params) s.b(v);
      s.u(ty.results.size());
      for (uint8_t v : ty.results) s.b(v);
    }
    section(out, 1, s);
  }

  void emit_limits(Buf& s, uint32_t mn, std::optional<uint32_t> mx) {
    if (mx) {
      s.b(1);
      s.u(mn);
      s.u(*mx);
    } else {
      s.b(0);
      s.u(mn);
    }
  }

  void emit_imports(Buf& out) {
    size_t n = import_funcs_.size() + import_globals_.size() +
               (import_memory_ ? 1 : 0);
    if (!n) return;
    Buf s;
    s.u(n);
    for (const auto& [mod, field, type] : import_funcs_) {
      s.str(mod);
      s.str(field);
      s.b(0);
      s.u(type);
    }
    if (import_memory_) {
      s.str(import_memory_->first);
      s.str(import_memory_->second);
      s.b(2);
      emit_limits(s, memory_min_, memory_max_);
    }
    for (const auto& [mod, field, g] : import_globals_) {
      s.str(mod);
      s.str(field);
      s.b(3);
      s.b(g.type);
      s.b(g.mut ? 1 : 0);
    }
    section(out, 2, s);
  }

  void emit_funcdecls(Buf& out) {
    if (funcs_.empty()) return;
    Buf s;
    s.u(funcs_.size());
    for (const auto& f : funcs_) s.u(f.type_index);
    section(out, 3, s);
  }

  void emit_table(Buf& out) {
    if (!has_table_) return;
    Buf s;
    s.u(1);
    s.b(0x70);
    emit_limits(s, table_min_, table_max_);
    section(out, 4, s);
  }

  void emit_memory(Buf& out) {
    if (!has_memory_ || import_memory_) return;
    Buf s;
    s.u(1);
    emit_limits(s, memory_min_, memory_max_);
    section(out, 5, s);
  }

  void const_literal(Buf& s, int line, uint8_t type, const std::string& lit) {
    if (type == 0x7F) {
      s.b(0x41);
      s.s(static_cast<int32_t>(std::stoll(lit, nullptr, 0)));
    } else if (type == 0x7E) {
      s.b(0x42);
      s.s(std::stoll(lit, nullptr, 0));
    } else if (type == 0x7D) {
      s.b(0x43);
      uint32_t bits;
      if (lit.rfind("bits:", 0) == 0) {
        bits = static_cast<uint32_t>(std::stoul(lit.substr(5), nullptr, 16));
      } else {
        float f = std::stof(lit);
        std::memcpy(&bits, &f, 4);
      }
      for (int i = 0; i < 4; ++i) s.b((bits >> (8 * i)) & 0xFF);
    } else if (type == 0x7C) {
      s.b(0x44);
      uint64_t bits;
      if (lit.rfind("bits:", 0) == 0) {
        bits = std::stoull(lit.substr(5), nullptr, 16);
      } else {
        double d = std::stod(lit);
        std::memcpy(&bits, &d, 8);
      }
      for (int i = 0; i < 8; ++i) s.b((bits >> (8 * i)) & 0xFF);
    } else {
      fail(line, "bad const type");
    }
  }

  void emit_globals(Buf& out) {
    if (globals_.empty()) return;
    Buf s;
    s.u(globals_.size());
    for (const auto& g : globals_) {
      s.b(g.type);
      s.b(g.mut ? 1 : 0);
      const_literal(s, g.line, g.type, g.literal);
      s.b(0x0B);
    }
    section(out, 6, s);
  }

  uint32_t func_index(int line, const std::string& name) {
    if (!name.empty() && name[0] == '$') {
      auto it = func_names_.find(name);
      if (it == func_names_.end()) fail(line, "unknown function " + name);
      return it->second;
    }
    return num({line, {}}, name);
  }

  uint32_t global_index(int line, const std::string& name) {
    if (!name.empty() && name[0] == '$') {
      auto it = global_names_.find(name);
      if (it == global_names_.end()) fail(line, "unknown global " + name);
      return it->second;
    }
    return num({line, {}}, name);
  }

  void emit_exports(Buf& out) {
    std::vector<std::pair<std::string, std::pair<uint8_t, uint32_t>>> all;
    for (size_t i = 0; i < funcs_.size(); ++i)
      if (!funcs_[i].export_name.empty())
        all.push_back({funcs_[i].export_name,
                       {0, static_cast<uint32_t>(import_funcs_.size() + i)}});
    for (const auto& e : exports_) {
      uint32_t idx = 0;
      if (e.kind == 0) idx = func_index(e.line, e.target);
      else if (e.kind == 3) idx = global_index(e.line, e.target);
      all.push_back({e.name, {e.kind, idx}});
    }
    if (all.empty()) return;
    Buf s;
    s.u(all.size());
    for (const auto& [name, ki] : all) {
      s.str(name);
      s.b(ki.first);
      s.u(ki.second);
    }
    section(out, 7, s);
  }

  void emit_start(Buf& out) {
    if (start_func_.empty()) return;
    Buf s;
    s.u(func_index(start_line_, start_func_));
    section(out, 8, s);
  }

  void emit_elem(Buf& out) {
    if (!has_elem_) return;
    Buf s;
    s.u(1);
    s.u(0);  // table 0
    s.b(0x41);
    s.s(static_cast<int64_t>(elem_offset_));
    s.b(0x0B);
    s.u(elem_funcs_.size());
    for (const auto& f : elem_funcs_) s.u(func_index(elem_line_, f));
    section(out, 9, s);
  }

  // natural alignment (log2) for a memory-access mnemonic
  static uint32_t natural_align(const std::string& m) {
    for (const char* part : {"load8", "store8"})
      if (m.find(part) != std::string::npos) return 0;
    for (const char* part : {"load16", "store16"})
      if (m.find(part) != std::string::npos) return 1;
    for (const char* part : {"load32", "store32"})
      if (m.find(part) != std::string::npos) return 2;
    if (m.rfind("i32", 0) == 0 || m.rfind("f32", 0) == 0) return 2;
    return 3;  // i64/f64 full-width
  }

  void body_instr(Buf& b, const Line& L) {
    const auto& t = L.tokens;
    const std::string& m = t[0];
    auto it = opcode_bytes().find(m);
    if (it == opcode_bytes().end()) fail(L.number, "unknown mnemonic " + m);
    b.b(it->second);

    if (m == "block" || m == "loop" || m == "if") {
      if (t.size() > 1) b.b(valtype_byte(L.number, t[1]));
      else b.b(0x40);
      return;
    }
    if (m == "br" || m == "br_if") {
      need(L, 2);
      b.u(num(L, t[1]));
      return;
    }
    if (m == "br_table") {
      need(L, 3);  // at least one target plus default
      b.u(t.size() - 2);
      for (size_t k = 1; k < t.size(); ++k) b.u(num(L, t[k]));
      return;
    }
    if (m == "call") {
      need(L, 2);
      b.u(func_index(L.number, t[1]));
      return;
    }
    if (m == "call_indirect") {
      Signature sig;
      signature(L, 1, sig);
      b.u(intern(sig));
      b.b(0);
      return;
    }
    if (m == "local.get" || m == "local.set" || m == "local.tee") {
      need(L, 2);
      b.u(num(L, t[1]));
      return;
    }
    if (m == "global.get" || m == "global.set") {
      need(L, 2);
      b.u(global_index(L.number, t[1]));
      return;
    }
    if (m == "i32.const") {
      need(L, 2);
      b.s(static_cast<int32_t>(std::stoll(t[1], nullptr, 0)));
      return;
    }
    if (m == "i64.const") {
      need(L, 2);
      b.s(std::stoll(t[1], nullptr, 0));
      return;
    }
    if (m == "f32.const" || m == "f64.const") {
      need(L, 2);
      Buf tmp;
      const_literal(tmp, L.number, m[1] == '3' ? 0x7D : 0x7C, t[1]);
      b.raw({tmp.out.begin() + 1, tmp.out.end()});  // skip const opcode byte
      return;
    }
    if (m.find(".load") != std::string::npos ||
        m.find(".store") != std::string::npos) {
      uint32_t align = natural_align(m);
      uint32_t offset = 0;
      for (size_t k = 1; k < t.size(); ++k) {
        if (t[k].rfind("offset=", 0) == 0)
          offset = num(L, t[k].substr(7));
        else if (t[k].rfind("align=", 0) == 0) {
          uint32_t bytes = num(L, t[k].substr(6));
          align = 0;
          while ((1u << align) < bytes) ++align;
        } else
          fail(L.number, "bad memory operand " + t[k]);
      }
      b.u(align);
      b.u(offset);
      return;
    }
    if (t.size() > 1) fail(L.number, "unexpected operand for " + m);
  }

  void emit_code(Buf& out) {
    if (funcs_.empty()) return;
    Buf s;
    s.u(funcs_.size());
    for (const auto& f : funcs_) {
      Buf body;
      // compress locals into runs
      std::vector<std::pair<uint32_t, uint8_t>> runs;
      for (uint8_t v : f.locals) {
        if (!runs.empty() && runs.back().second == v) runs.back().first++;
        else runs.push_back({1, v});
      }
      body.u(runs.size());
      for (auto [count, v] : runs) {
        body.u(count);
        body.b(v);
      }
      for (const Line& L : f.body) body_instr(body, L);
      s.u(body.out.size());
      s.raw(body.out);
    }
    section(out, 10, s);
  }

  void emit_data(Buf& out) {
    if (datas_.empty()) return;
    Buf s;
    s.u(datas_.size());
    for (const auto& d : datas_) {
      s.u(0);
      s.b(0x41);
      s.s(static_cast<int64_t>(d.offset));
      s.b(0x0B);
      s.u(d.bytes.size());
      s.raw(d.bytes);
    }
    section(out, 11, s);
  }

  std::string module_name_ = "unnamed";
  std::string label_ = "benign";
  std::vector<Signature> types_;
  std::map<Signature, uint32_t> type_index_;
  std::vector<std::tuple<std::string, std::string, uint32_t>> import_funcs_;
  std::vector<std::tuple<std::string, std::string, GlobalDecl>> import_globals_;
  std::optional<std::pair<std::string, std::string>> import_memory_;
  std::map<std::string, uint32_t> func_names_;
  std::map<std::string, uint32_t> global_names_;
  std::vector<FuncDecl> funcs_;
  std::vector<GlobalDecl> globals_;
  std::vector<DataDecl> datas_;
  std::vector<ExportDecl> exports_;
  bool has_memory_ = false, has_table_ = false, has_elem_ = false;
  uint32_t memory_min_ = 0, table_min_ = 0, elem_offset_ = 0;
  std::optional<uint32_t> memory_max_, table_max_;
  std::vector<std::string> elem_funcs_;
  std::string start_func_;
  int start_line_ = 0, elem_line_ = 0;
};

}  // namespace

Assembled assemble(const std::string& source) {
  return Assembler().run(source);
}

}  // namespace watl
