import init, { Detector, smooth } from "./pkg/gran_demo.js";

const $ = (id) => document.getElementById(id);
const SIZE = 28;
let detector = null;
let pixels = new Float64Array(SIZE * SIZE);
let adversarial = null;

function paint(canvas, values) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(SIZE, SIZE);
  for (let i = 0; i < SIZE * SIZE; i++) {
    const v = Math.round(255 * Math.min(1, Math.max(0, values[i])));
    img.data.set([v, v, v, 255], 4 * i);
  }
  ctx.putImageData(img, 0, 0);
}

function argmax(probs) {
  let best = 0;
  for (let i = 1; i < probs.length; i++) if (probs[i] > probs[best]) best = i;
  return `${best} (${(100 * probs[best]).toFixed(1)}%)`;
}

function setDetector(d, label) {
  detector = d;
  const shape = Array.from(d.inputShape());
  if (shape.join() !== "1,28,28") {
    $("status").textContent = `checkpoint expects input ${shape.join("x")}; this page draws 1x28x28`;
    detector = null;
    return;
  }
  $("status").textContent = `${label}, checksum ${d.checksum().slice(0, 12)}`;
  refresh();
}

function refresh() {
  paint($("draw"), pixels);
  const sigma = parseFloat($("sigma").value);
  $("sigmaVal").textContent = sigma.toFixed(1);
  paint($("smoothed"), smooth(pixels, new Uint32Array([1, SIZE, SIZE]), sigma));
  if (detector) $("pred").textContent = argmax(detector.predict(pixels));
}

function showFeatures() {
  if (!detector) return;
  const sigma = parseFloat($("sigma").value);
  const names = detector.featureNames();
  const clean = detector.features(pixels, sigma);
  const adv = adversarial ? detector.features(adversarial, sigma) : null;
  const max = Math.max(...clean, ...(adv ?? []), 1e-12);
  const rows = names.map((n, i) => {
    const w = (v) => `<div class="bar" style="width:${(200 * v) / max}px"></div>`;
    const a = adv ? `<td>${adv[i].toExponential(3)}</td><td>${w(adv[i])}</td>` : "";
    return `<tr><td>${n}</td><td>${clean[i].toExponential(3)}</td><td>${w(clean[i])}</td>${a}</tr>`;
  });
  const head = adv ? "<tr><th></th><th colspan=2>input</th><th colspan=2>FGSM</th></tr>" : "";
  $("featTable").innerHTML = head + rows.join("");
  const sum = (v) => v.reduce((s, x) => s + x, 0);
  $("featAdv").textContent = adv
    ? `total: input ${sum(clean).toExponential(3)}, FGSM ${sum(adv).toExponential(3)}`
    : `total: ${sum(clean).toExponential(3)}`;
}

function attack() {
  if (!detector) return;
  const eps = parseFloat($("eps").value);
  adversarial = detector.attack(pixels, eps);
  paint($("adv"), adversarial);
  $("advPred").textContent = argmax(detector.predict(adversarial));
  showFeatures();
}

function stroke(ev) {
  if (ev.buttons !== 1) return;
  const r = $("draw").getBoundingClientRect();
  const cx = ((ev.clientX - r.left) / r.width) * SIZE;
  const cy = ((ev.clientY - r.top) / r.height) * SIZE;
  for (let y = 0; y < SIZE; y++) {
    for (let x = 0; x < SIZE; x++) {
      const d2 = (x + 0.5 - cx) ** 2 + (y + 0.5 - cy) ** 2;
      const v = Math.exp(-d2 / 1.2);
      pixels[y * SIZE + x] = Math.min(1, pixels[y * SIZE + x] + v);
    }
  }
  adversarial = null;
  refresh();
}

await init();
$("draw").addEventListener("pointerdown", stroke);
$("draw").addEventListener("pointermove", stroke);
$("sigma").addEventListener("input", refresh);
$("eps").addEventListener("input", () => ($("epsVal").textContent = $("eps").value));
$("attack").addEventListener("click", attack);
$("features").addEventListener("click", showFeatures);
$("clear").addEventListener("click", () => {
  pixels = new Float64Array(SIZE * SIZE);
  adversarial = null;
  $("featTable").innerHTML = "";
  $("featAdv").textContent = "";
  refresh();
});
$("untrained").addEventListener("click", () => setDetector(Detector.untrained("mnist", 1n), "untrained network"));
$("ckpt").addEventListener("change", async (ev) => {
  const file = ev.target.files[0];
  if (!file) return;
  try {
    setDetector(Detector.fromCheckpoint(new Uint8Array(await file.arrayBuffer())), file.name);
  } catch (e) {
    $("status").textContent = `could not load ${file.name}: ${e}`;
  }
});
setDetector(Detector.untrained("mnist", 1n), "untrained network");
