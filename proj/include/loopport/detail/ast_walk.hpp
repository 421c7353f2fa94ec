// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace loopport::frontend {

template <class Fn> void walk_postorder(const ExprPtr& e, Fn&& fn) {
  if (!e) return;
  if (auto* a = e->as<ArrayRef>()) {
    for (const auto& i : a->indices) walk_postorder(i, fn);
  } else if (auto* c = e->as<IntrinsicCall>()) {
    for (const auto& i : c->args) walk_postorder(i, fn);
  } else if (auto* u = e->as<Unary>()) {
    walk_postorder(u->operand, fn);
  } else if (auto* b = e->as<Binary>()) {
    walk_postorder(b->lhs, fn);
    walk_postorder(b->rhs, fn);
  }
  fn(e);
}

} // namespace loopport::frontend
