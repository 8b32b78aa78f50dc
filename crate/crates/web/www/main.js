import init, { Demo } from "./pkg/spect_interp_web.js";

const $ = (id) => document.getElementById(id);
let demo;

function draw(canvas, pixels, width, height) {
  canvas.width = width;
  canvas.height = height;
  if (pixels.length === 0) {
    canvas.getContext("2d").clearRect(0, 0, width, height);
    return;
  }
  const img = new ImageData(new Uint8ClampedArray(pixels), width, height);
  canvas.getContext("2d").putImageData(img, 0, 0);
}

function drawAll() {
  const n = demo.size();
  draw($("phantom"), demo.phantomPixels(), n, n);
  draw($("sinogram"), demo.sinogramPixels(), n, Math.max(demo.sinogramViews(), 1));
  draw($("recon"), demo.reconPixels(), n, n);
}

// Runs a step after the status text has painted.
function step(label, fn) {
  $("status").textContent = label + "...";
  setTimeout(() => {
    try {
      fn();
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e.message ?? e);
    }
    drawAll();
  }, 10);
}

function makePhantom() {
  const size = Number($("size").value);
  if (!demo || demo.size() !== size) {
    demo?.free();
    demo = new Demo(size);
  }
  if ($("kind").value === "random") {
    demo.randomPhantom(Number($("phantom-seed").value), Number($("phantom-index").value));
  } else {
    demo.sheppLogan();
  }
  $("scores").textContent = "";
}

function acquire() {
  demo.acquire(Number($("views").value), $("noise").value, Number($("noise-seed").value));
  $("scores").textContent = "";
}

function reconstruct() {
  const s = demo.reconstruct(Number($("subsets").value), Number($("iters").value));
  const psnr = Number.isFinite(s.psnr) ? s.psnr.toFixed(2) + " dB" : "inf";
  $("scores").textContent = `SSIM ${s.ssim.toFixed(3)}  PSNR ${psnr}  MSE ${s.mse.toFixed(5)}`;
  s.free();
}

await init();
$("make-phantom").onclick = () => step("generating", makePhantom);
$("acquire").onclick = () => step("projecting", acquire);
$("reconstruct").onclick = () => step("reconstructing", reconstruct);
step("generating", () => {
  makePhantom();
  acquire();
});
