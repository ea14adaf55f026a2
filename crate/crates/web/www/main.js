import init, { concreteHistogram, DemoSession } from "./pkg/magnet_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const SVG = "http://www.w3.org/2000/svg";

function el(name, attrs, parent) {
  const node = document.createElementNS(SVG, name);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  parent.appendChild(node);
  return node;
}

function fail(target, e) {
  target.textContent = String(e.message ?? e);
  target.classList.add("err");
}

function show(target, text) {
  target.textContent = text;
  target.classList.remove("err");
}

function drawHistogram(h) {
  const svg = $("h-plot");
  svg.replaceChildren();
  const w = +svg.getAttribute("width"), ht = +svg.getAttribute("height") - 20;
  const max = Math.max(...h.counts);
  const bw = w / h.counts.length;
  h.counts.forEach((c, i) => {
    const bh = (c / max) * (ht - 4);
    el("rect", { x: i * bw + 1, y: ht - bh, width: bw - 2, height: bh, fill: i < h.counts.length / 2 ? "#bbb" : "#4c72b0" }, svg);
  });
  el("line", { x1: w / 2, x2: w / 2, y1: 0, y2: ht, stroke: "#c00", "stroke-dasharray": "4 3" }, svg);
  for (const [x, t] of [[2, "0"], [w / 2 - 8, "0.5"], [w - 12, "1"]]) {
    el("text", { x, y: ht + 15, "font-size": 11 }, svg).textContent = t;
  }
}

function runHistogram() {
  try {
    const h = JSON.parse(concreteHistogram(num("h-psi"), num("h-omega"), num("h-draws"), 20, 1n));
    drawHistogram(h);
    show($("h-out"), `share above 0.5: ${h.fraction_above_half.toFixed(4)}\nsigmoid(logit): ${h.sigmoid_psi.toFixed(4)}`);
  } catch (e) {
    fail($("h-out"), e);
  }
}

let session = null;
let graph = null;

function runTrain() {
  const out = $("t-out");
  show(out, "training...");
  $("x-run").disabled = true;
  setTimeout(() => {
    try {
      session?.free();
      session = new DemoSession(num("t-setting"), num("t-n"), num("t-nodes"), num("t-important"), num("t-p"), BigInt(num("t-seed")));
      graph = JSON.parse(session.graph());
      const t0 = performance.now();
      const s = JSON.parse(session.train(num("t-k")));
      const ms = performance.now() - t0;
      show(out, [
        `graph: ${graph.n_nodes} nodes, ${graph.edges.length} edges, important nodes ${graph.important.join(" ")}`,
        `train accuracy ${s.train_accuracy.toFixed(3)} on ${s.train_size}, held-out accuracy ${s.test_accuracy.toFixed(3)} on ${s.test_size}`,
        `order weights ${s.alphas.map((a) => a.toFixed(3)).join(", ")}`,
        `critic errors ${s.epsilons.map((e) => e.toFixed(3)).join(", ")}`,
        `${ms.toFixed(0)} ms`,
      ].join("\n"));
      $("x-top").value = graph.important.length;
      $("x-run").disabled = false;
      drawGraph(null);
    } catch (e) {
      session = null;
      fail(out, e);
    }
  }, 10);
}

function drawGraph(expl) {
  const svg = $("x-graph");
  svg.replaceChildren();
  const size = +svg.getAttribute("width"), c = size / 2, r = size / 2 - 24;
  const pos = Array.from({ length: graph.n_nodes }, (_, i) => {
    const a = (2 * Math.PI * i) / graph.n_nodes - Math.PI / 2;
    return [c + r * Math.cos(a), c + r * Math.sin(a)];
  });
  const important = new Set(graph.important);
  const kept = new Set(expl ? expl.kept_nodes : []);
  graph.edges.forEach(([i, j], k) => {
    const s = expl ? expl.edge_scores[k] : 0.3;
    el("line", {
      x1: pos[i][0], y1: pos[i][1], x2: pos[j][0], y2: pos[j][1],
      stroke: expl && s >= 0.5 ? "#2a7d2a" : "#888", "stroke-opacity": 0.1 + 0.8 * s, "stroke-width": 0.5 + 2.5 * s,
    }, svg);
  });
  pos.forEach(([x, y], v) => {
    el("circle", {
      cx: x, cy: y, r: 8,
      fill: important.has(v) ? "#f2c14e" : "#fff",
      stroke: kept.has(v) ? "#2a7d2a" : "#555", "stroke-width": kept.has(v) ? 3 : 1,
    }, svg);
    el("text", { x: x - 4, y: y + 4, "font-size": 9 }, svg).textContent = v;
  });
}

function runExplain() {
  const out = $("x-out");
  show(out, "optimising masks...");
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const e = JSON.parse(session.explain(num("x-lambda"), num("x-iters"), num("x-top")));
      const ms = performance.now() - t0;
      drawGraph(e);
      const loss = e.loss_trajectory;
      show(out, [
        `kept edges ${e.kept_edges} of ${graph.edges.length}`,
        `kept nodes ${e.kept_nodes.join(" ")}`,
        `node recovery ${e.recovery_rate.toFixed(3)}   AM ${e.am.toFixed(4)}   RM ${e.rm.toFixed(4)}`,
        `loss ${loss[0].toFixed(4)} -> ${loss[loss.length - 1].toFixed(4)}`,
        `feature scores ${e.feature_scores.map((f) => f.toFixed(2)).join(" ")}`,
        `${ms.toFixed(0)} ms`,
        "",
        "yellow: important nodes, green ring: kept nodes",
      ].join("\n"));
    } catch (err) {
      fail(out, err);
    }
  }, 10);
}

await init();
$("h-run").addEventListener("click", runHistogram);
$("t-run").addEventListener("click", runTrain);
$("x-run").addEventListener("click", runExplain);
runHistogram();
