import init, { vocabulary, groupDistribution, sanitizeText, queryCurve } from "./pkg/custext_wasm.js";

const $ = (id) => document.getElementById(id);
const k = () => Number($("k").value);
const measure = () => $("measure").value;

function escape(s) {
  return s.replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function guarded(target, f) {
  try {
    f();
  } catch (e) {
    $(target).innerHTML = `<p class="error">${escape(String(e.message ?? e))}</p>`;
  }
}

function showDistribution() {
  const eps = 10 ** Number($("dist-eps").value);
  $("dist-eps-val").textContent = eps.toPrecision(3);
  guarded("dist-out", () => {
    const d = JSON.parse(groupDistribution($("dist-word").value, eps, k(), measure()));
    const rows = d.members
      .map((m, i) => [m, d.probabilities[i]])
      .sort((a, b) => b[1] - a[1])
      .map(([m, p]) => `<tr><td>${escape(m)}</td><td>${p.toFixed(4)}</td>` +
        `<td><div class="bar" style="width:${(p * 20).toFixed(2)}rem"></div></td></tr>`)
      .join("");
    $("dist-out").innerHTML = `<table><tr><th>output</th><th>p</th><th></th></tr>${rows}</table>`;
  });
}

function runSanitize() {
  guarded("san-out", () => {
    const s = JSON.parse(sanitizeText($("san-text").value, Number($("san-eps").value), k(), measure(),
      Number($("san-seed").value) >>> 0, $("san-plus").checked));
    const rows = s.tokens
      .map((t) => `<tr class="${t.input === t.output ? "kept" : ""}"><td>${escape(t.input)}</td>` +
        `<td>${escape(t.output)}</td><td>${t.action}</td></tr>`)
      .join("");
    $("san-out").innerHTML = `<p><strong>${escape(s.text)}</strong></p>` +
      `<table><tr><th>input</th><th>output</th><th>action</th></tr>${rows}</table>`;
  });
}

function runQuery() {
  $("q-out").textContent = "running…";
  // Let the status paint before the blocking call.
  setTimeout(() => guarded("q-out", () => {
    const eps = $("q-eps").value.split(",").map(Number).filter((x) => x > 0);
    const points = JSON.parse(queryCurve($("q-word").value, k(), measure(), Float64Array.from(eps)));
    const rows = points
      .map((p) => `<tr><td>${p.epsilon}</td><td>${p.no_protection ? "1 (no protection)" : p.censored ? `&gt; ${p.n}` : p.n}</td></tr>`)
      .join("");
    $("q-out").innerHTML = `<table><tr><th>ε</th><th>N</th></tr>${rows}</table>`;
  }), 0);
}

await init();
$("vocab").textContent = JSON.parse(vocabulary()).join(" ");
for (const id of ["dist-word", "dist-eps", "k", "measure"]) $(id).addEventListener("input", showDistribution);
$("san-run").addEventListener("click", runSanitize);
$("q-run").addEventListener("click", runQuery);
showDistribution();
