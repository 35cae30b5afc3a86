import init, { check, compare, fig1 } from "./pkg/kq_wasm.js";

const K1 = {
  signature: { R: 2, P: 1 },
  universe: ["a", "b", "c"],
  relations: { R: [["a", "b"], ["b", "c"]], P: [["b"]] },
};

const $ = (id) => document.getElementById(id);

function escape(s) {
  return String(s).replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);
}

function guarded(out, f) {
  try {
    out.innerHTML = f();
  } catch (e) {
    out.innerHTML = `<p class="err">${escape(e)}</p>`;
  }
}

function runCheck() {
  guarded($("c-out"), () => {
    const r = JSON.parse(check($("c-structure").value, Number($("c-k").value), $("c-alpha").value, $("c-formula").value));
    const rows = r.trace
      .map((t) => `<tr><td>${escape(t.formula)}</td><td>{${t.extension.map(escape).join("; ")}}</td><td>${t.holds}</td></tr>`)
      .join("");
    return `<p><b>${r.value}</b></p><table><tr><th>subformula</th><th>extension</th><th>at tuple</th></tr>${rows}</table>`;
  });
}

function runCompare() {
  guarded($("b-out"), () => {
    const r = JSON.parse(
      compare($("b-left").value, $("b-right").value, Number($("b-k").value), $("b-alpha").value, $("b-beta").value, $("b-q").value),
    );
    const verdict = r.bisimilar ? "bisimilar" : `not bisimilar, Player 1 wins in ${r.failureRound} round(s)`;
    const sep = r.distinguishing ? `<p>separating formula (rank ${r.distinguishingRank}):</p><pre>${escape(r.distinguishing)}</pre>` : "";
    const pairs = r.pairs.map(([x, y]) => `(${escape(x)}) ~ (${escape(y)})`).join("\n");
    return `<p><b>${verdict}</b></p>${sep}<p>bisimilar pairs:</p><pre>${pairs || "none"}</pre>`;
  });
}

function edges(doc) {
  return doc.relations.R.map(([x, y]) => `${x}→${y}`).join(" ");
}

function runFig1() {
  const n = Number($("f-n").value);
  $("f-nv").textContent = n;
  guarded($("f-out"), () => {
    const r = JSON.parse(fig1(n));
    return `<table>
      <tr><th>game</th><th>χ satisfaction</th><th>definable sets</th><th>bisimilar</th></tr>
      <tr><td>${r.game}</td><td>${r.chi}</td><td>${r.oracle}</td><td>${r.bisimilar}</td></tr>
    </table>
    <p>left (${r.left.universe.length} nodes): <code>${escape(edges(r.left))}</code></p>
    <p>right (${r.right.universe.length} nodes): <code>${escape(edges(r.right))}</code></p>`;
  });
}

await init();
const text = JSON.stringify(K1, null, 1);
$("c-structure").value = text;
$("b-left").value = text;
$("b-right").value = text;
$("c-run").onclick = runCheck;
$("b-run").onclick = runCompare;
$("f-n").oninput = runFig1;
runCheck();
runCompare();
runFig1();
