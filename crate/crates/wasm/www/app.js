import init, { attenuationCurve, gate, histogramQError } from "./pkg/eelearn_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function show(id, fn) {
  const el = $(id);
  try {
    el.textContent = fn();
    el.classList.remove("err");
  } catch (e) {
    el.textContent = String(e.message ?? e);
    el.classList.add("err");
  }
}

function drawCurve(ys, beta) {
  const c = $("att"), g = c.getContext("2d");
  const pad = 24, w = c.width - 2 * pad, h = c.height - 2 * pad;
  g.clearRect(0, 0, c.width, c.height);
  g.strokeStyle = "#999";
  g.strokeRect(pad, pad, w, h);
  const y = (v) => pad + h - v * h;
  g.fillStyle = "#eee";
  g.fillRect(pad, y(1), w, y(1 - beta) - y(1));
  g.strokeStyle = "#06c";
  g.lineWidth = 2;
  g.beginPath();
  ys.forEach((v, i) => {
    const x = pad + (i / (ys.length - 1)) * w;
    i ? g.lineTo(x, y(v)) : g.moveTo(x, y(v));
  });
  g.stroke();
}

function attenuation() {
  show("att-out", () => {
    const it = num("it");
    const ys = attenuationCurve(num("a0"), num("b"), num("w"), num("c1"), num("c2"), $("dec").checked, it, 201);
    drawCurve(ys, num("b"));
    return `α(0) = ${ys[0].toFixed(4)}   α(${it}) = ${ys[ys.length - 1].toFixed(4)}`;
  });
}

function gateDemo() {
  show("gate-out", () => {
    const [c, learned, sol, err, bound] = gate(num("cl"), num("cr"), num("cs"), num("d"));
    return [
      `credibility c = ${c.toFixed(4)}  →  ${learned ? "learned" : "rule"} (${sol})`,
      `error of chosen = ${err.toFixed(4)}   bound = ${bound.toFixed(4)}   ${err <= bound + 1e-9 ? "within" : "VIOLATED"}`,
    ].join("\n");
  });
}

function histogram() {
  show("hist-out", () => {
    const [med, mean, p99] = histogramQError(num("hb"), num("hr"), num("hq"), BigInt(num("hs")));
    return `q-error  median ${med.toFixed(3)}  mean ${mean.toFixed(3)}  p99 ${p99.toFixed(3)}`;
  });
}

await init();
for (const id of ["a0", "b", "w", "c1", "c2", "it", "dec"]) $(id).addEventListener("input", attenuation);
for (const id of ["cl", "cr", "cs", "d"]) $(id).addEventListener("input", gateDemo);
$("hgo").addEventListener("click", histogram);
attenuation();
gateDemo();
histogram();
