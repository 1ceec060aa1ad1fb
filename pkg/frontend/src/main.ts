import { MapApp } from "./app";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const app = new MapApp(root, "", {
  width: Math.max(640, window.innerWidth - 40),
  height: Math.max(480, window.innerHeight - 120),
});
void app.ready;
