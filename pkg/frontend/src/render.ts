/** DOM rendering: shelves, pivot grid, rule panel, trace panel. */

import type { App } from "./controller.js";
import { cellHint, formatValue } from "./format.js";
import type { Zone } from "./state.js";
import type { TraceNode } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderApp(root: HTMLElement, app: App): void {
  root.textContent = "";
  root.append(renderShelves(app), renderConflict(app), renderGrid(app));
  const side = el("div", "side-panels");
  side.append(renderRules(app), renderTrace(app));
  root.append(side);
}

function renderShelves(app: App): HTMLElement {
  const bar = el("div", "shelves");
  const zones: Zone[] = ["pages", "rows", "cols"];
  for (const zone of zones) {
    const shelf = el("div", `shelf shelf-${zone}`);
    shelf.append(el("span", "shelf-label", zone.toUpperCase()));
    shelf.dataset.zone = zone;
    shelf.addEventListener("dragover", (e) => e.preventDefault());
    shelf.addEventListener("drop", (e) => {
      e.preventDefault();
      const dim = e.dataTransfer?.getData("text/dimension");
      if (dim) {
        app.state.placeDimension(dim, zone);
        void app.refresh();
      }
    });
    const dims =
      zone === "pages" ? app.state.pages : zone === "rows" ? app.state.rows : app.state.cols;
    for (const dim of dims) {
      const chip = el("span", "dim-chip", dim);
      chip.draggable = true;
      chip.addEventListener("dragstart", (e) => {
        e.dataTransfer?.setData("text/dimension", dim);
      });
      if (zone === "pages") {
        const select = el("select", "page-member");
        const info = app.state.structure.dimensions.find((d) => d.name === dim);
        for (const member of info?.members ?? []) {
          const option = el("option", undefined, member.name);
          option.value = member.name;
          option.selected = app.state.pageMembers.get(dim) === member.name;
          select.append(option);
        }
        select.addEventListener("change", () => {
          app.state.setPage(dim, select.value);
          void app.refresh();
        });
        chip.append(select);
      }
      shelf.append(chip);
    }
    bar.append(shelf);
  }
  return bar;
}

function renderConflict(app: App): HTMLElement {
  const banner = el("div", "conflict-banner");
  if (app.state.conflict) {
    banner.append(
      el("span", undefined, `Concurrent change: ${app.state.conflict} — `),
    );
    const reload = el("button", undefined, "Reload and reapply");
    reload.addEventListener("click", () => void app.reloadAfterConflict());
    banner.append(reload);
  } else {
    banner.hidden = true;
  }
  return banner;
}

function renderGrid(app: App): HTMLElement {
  const wrap = el("div", "grid-wrap");
  const grid = app.state.grid;
  if (!grid) {
    wrap.append(el("p", "placeholder", "No view loaded."));
    return wrap;
  }
  const table = el("table", "grid");
  const nRowDims = grid.row_dims.length;
  grid.col_dims.forEach((_, level) => {
    const tr = el("tr");
    for (let i = 0; i < Math.max(nRowDims, 1); i++) {
      tr.append(el("th", "corner", level === grid.col_dims.length - 1 ? grid.row_dims[i] ?? "" : ""));
    }
    for (const header of grid.col_headers) {
      tr.append(el("th", "col-header", header[level]));
    }
    table.append(tr);
  });
  grid.row_headers.forEach((header, i) => {
    const tr = el("tr");
    header.forEach((name, part) => {
      const th = el("th", "row-header", name);
      const depth = grid.row_depths[i][part];
      th.style.paddingLeft = `${8 + 14 * depth}px`;
      const dim = app.state.structure.dimensions.find((d) => d.name === grid.row_dims[part]);
      const member = dim?.members.find((m) => m.name === name);
      if (member?.has_children) {
        th.classList.add("expandable");
        const expanded = app.state.expanded.get(dim!.name)?.has(name);
        th.textContent = `${expanded ? "▾" : "▸"} ${name}`;
        th.addEventListener("click", () => {
          app.state.toggleExpand(dim!.name, name);
          void app.refresh();
        });
      }
      tr.append(th);
    });
    grid.values[i].forEach((value, j) => {
      const td = el("td", "cell");
      const flags = grid.flags[i][j];
      const pendingKey = `${i},${j}`;
      const pending = [...app.state.pendingEdits.values()].find(
        (e) => e.row === i && e.col === j,
      );
      td.textContent = pending
        ? String(pending.value)
        : formatValue(value, grid.errors[i][j], cellHint(app.state.formatHints(i, j)));
      if (flags.includes("input-eligible")) td.classList.add("editable");
      if (flags.includes("overridden")) {
        td.classList.add("overridden");
        td.append(el("span", "pin-badge", "📌"));
      }
      if (flags.includes("error")) td.classList.add("error");
      if (app.state.changed.has(pendingKey)) td.classList.add("changed");
      if (pending) td.classList.add("pending");
      if (app.isAuditFlagged(app.state.addressAt(i, j))) td.classList.add("audit-flag");
      td.addEventListener("dblclick", () => {
        void app.openTrace(app.state.addressAt(i, j));
      });
      if (flags.includes("input-eligible") || flags.includes("rule-covered")) {
        td.addEventListener("click", (e) => {
          if ((e as MouseEvent).detail !== 1) return;
          beginEdit(app, td, i, j);
        });
      }
      tr.append(td);
    });
    table.append(tr);
  });
  wrap.append(table);

  const actions = el("div", "grid-actions");
  const send = el("button", "send", `Send (${app.state.pendingEdits.size})`);
  send.disabled = app.state.pendingEdits.size === 0;
  send.addEventListener("click", () => void app.sendEdits());
  const discard = el("button", undefined, "Discard");
  discard.addEventListener("click", () => {
    app.state.discardEdits();
    void app.refresh();
  });
  actions.append(send, discard);
  wrap.append(actions);
  return wrap;
}

function beginEdit(app: App, td: HTMLTableCellElement, row: number, col: number): void {
  if (td.querySelector("input")) return;
  const editable = app.state.isEditable(row, col);
  const input = el("input", "cell-input");
  input.value = String(app.state.grid?.values[row][col] ?? "");
  const overrideBox = el("label", "override-toggle");
  const check = el("input");
  check.type = "checkbox";
  check.checked = !editable;
  check.disabled = editable;
  overrideBox.append(check, document.createTextNode(" override"));
  const commit = () => {
    const value = Number(input.value);
    if (!Number.isFinite(value)) return;
    const staged = app.state.stageEdit(row, col, value, check.checked);
    if (!staged) {
      td.classList.add("blocked");
      setTimeout(() => td.classList.remove("blocked"), 600);
    }
    app.repaint();
  };
  input.addEventListener("keydown", (e) => {
    if (e.key === "Enter") commit();
    if (e.key === "Escape") app.repaint();
  });
  td.textContent = "";
  td.append(input, overrideBox);
  input.focus();
}

function renderRules(app: App): HTMLElement {
  const panel = el("div", "rules-panel");
  panel.append(el("h2", undefined, "Rules"));
  const list = el("ol", "rule-list");
  const order = app.draftOrder();
  order.forEach((name, index) => {
    const rule = app.rules.find((r) => r.name === name);
    if (!rule) return;
    const item = el("li", "rule-item");
    item.draggable = true;
    item.addEventListener("dragstart", (e) => {
      e.dataTransfer?.setData("text/rule-index", String(index));
    });
    item.addEventListener("dragover", (e) => e.preventDefault());
    item.addEventListener("drop", (e) => {
      e.preventDefault();
      const from = Number(e.dataTransfer?.getData("text/rule-index"));
      if (!Number.isNaN(from)) app.dragRule(from, index);
    });
    const checkbox = el("input");
    checkbox.type = "checkbox";
    checkbox.checked = app.ruleDraft?.enabled[name] ?? rule.enabled;
    checkbox.addEventListener("change", () => app.toggleRule(name));
    item.append(
      checkbox,
      el("span", "rule-name", ` ${name} `),
      el("code", "rule-formula", rule.formula),
    );
    list.append(item);
  });
  panel.append(list);
  const apply = el("button", "apply-rules", "Apply (recalculates)");
  apply.disabled = app.ruleDraft === null;
  apply.addEventListener("click", () => void app.applyRuleChanges());
  panel.append(apply);
  return panel;
}

function renderTrace(app: App): HTMLElement {
  const panel = el("div", "trace-panel");
  panel.append(el("h2", undefined, "Trace"));
  if (!app.trace.stack.length) {
    panel.append(el("p", "placeholder", "Double-click a cell to trace it."));
    return panel;
  }
  for (const step of app.trace.stack) {
    const block = el("div", "trace-block");
    block.append(traceRow(app, step.node, true));
    if (step.applicable_rules.length > 1) {
      const selector = el("select", "rule-selector");
      for (const rule of step.applicable_rules) {
        const option = el(
          "option",
          undefined,
          `${rule.sequence}. ${rule.name}${rule.winner ? " (winner)" : ""}`,
        );
        option.value = rule.name;
        option.selected = rule.name === step.node.rule;
        selector.append(option);
      }
      selector.addEventListener("change", () => {
        void app.openTrace(step.node.address, selector.value);
      });
      block.append(selector);
    }
    for (const child of step.node.children) {
      block.append(traceRow(app, child, false));
    }
    panel.append(block);
  }
  const close = el("button", undefined, "Close trace");
  close.addEventListener("click", () => app.closeTrace());
  panel.append(close);
  return panel;
}

function traceRow(app: App, node: TraceNode, isParent: boolean): HTMLElement {
  const row = el("div", isParent ? "trace-row parent" : "trace-row child");
  const label = el("span", "trace-label", node.label);
  const names = Object.values(node.address).join(" / ");
  const value = node.error ? `#${node.error}!` : String(node.value);
  row.append(
    label,
    el("span", "trace-address", ` ${names} = `),
    el("strong", "trace-value", value),
  );
  if (node.rule_formula) {
    row.append(el("code", "trace-rule", ` ${node.rule_formula}`));
  }
  if (app.isAuditFlagged(node.address)) {
    row.append(el("span", "audit-flag", " ⚠ decompositions disagree"));
  }
  if (!isParent && node.has_children) {
    const drill = el("button", "drill", "drill");
    drill.addEventListener("click", () => void app.drillChild(node));
    row.append(drill);
  }
  return row;
}
