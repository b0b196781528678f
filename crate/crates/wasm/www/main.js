import init, { partition_demo, cka_demo, layernorm_outlier_demo } from "./pkg/vip_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const big = (id) => BigInt(Math.max(0, Math.floor(num(id))));
const fmt = (x) => (x === null ? "n/a" : x.toFixed(4));

function guard(target, fn) {
  try {
    fn();
  } catch (e) {
    $(target).innerHTML = `<p class="err">${e}</p>`;
  }
}

function bar(share, color) {
  return `<span class="bar" style="width:${(share * 120).toFixed(1)}px;background:${color}"></span>`;
}

function runPartition() {
  guard("p-table", () => {
    const r = JSON.parse(partition_demo(num("p-depth"), num("p-reg"), big("p-seed")));
    const rows = r.layers
      .map(
        (l, i) =>
          `<tr><td>${i}</td><td>${fmt(l.patch)}</td><td>${fmt(l.register)}</td><td>${fmt(l.cls_self)}</td>` +
          `<td style="text-align:left">${bar(l.patch, "#3b528b")}${bar(l.register, "#5ec962")}${bar(l.cls_self, "#fde725")}</td></tr>`
      )
      .join("");
    $("p-table").innerHTML =
      `<table><tr><th>layer</th><th>patches</th><th>registers</th><th>CLS</th><th></th></tr>${rows}</table>`;
    $("p-map").innerHTML = r.map_svg;
  });
}

function runCka() {
  guard("c-out", () => {
    const r = JSON.parse(cka_demo(num("c-n"), num("c-reg"), num("c-layer"), big("c-seed")));
    $("c-out").innerHTML =
      `<table><tr><th>variant (layer ${r.layer})</th><th>CKA vs full</th></tr>` +
      `<tr><td>patches only</td><td>${fmt(r.full_vs_patches)}</td></tr>` +
      `<tr><td>registers only</td><td>${fmt(r.full_vs_registers)}</td></tr>` +
      `<tr><td>skip only</td><td>${fmt(r.full_vs_skip)}</td></tr></table>`;
  });
}

function runOutlier() {
  guard("o-out", () => {
    const r = JSON.parse(layernorm_outlier_demo(num("o-n"), num("o-scale"), num("o-gain"), big("o-seed")));
    const dims = r.dims
      .map((d, i) => `<tr><td>${d}</td><td>${fmt(r.pre_mean[i])}</td><td>${fmt(r.post_mean[i])}</td></tr>`)
      .join("");
    $("o-out").innerHTML =
      `<table><tr><th></th><th>mean cosine</th><th>min</th><th>max</th></tr>` +
      `<tr><td>before norm</td><td>${fmt(r.pre.mean)}</td><td>${fmt(r.pre.min)}</td><td>${fmt(r.pre.max)}</td></tr>` +
      `<tr><td>after norm</td><td>${fmt(r.post.mean)}</td><td>${fmt(r.post.min)}</td><td>${fmt(r.post.max)}</td></tr></table>` +
      `<table><tr><th>dim</th><th>mean before</th><th>mean after</th></tr>${dims}</table>`;
  });
}

await init();
$("p-run").onclick = runPartition;
$("c-run").onclick = runCka;
$("o-run").onclick = runOutlier;
runPartition();
runCka();
runOutlier();
