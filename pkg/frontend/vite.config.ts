import { defineConfig } from "vitest/config";

// `npm run dev` proxies API paths to a locally running `cartomap serve`.
const API = "http://127.0.0.1:8000";
const apiPaths = ["/layers", "/tiles", "/filtered", "/labels", "/clusters", "/search", "/entity", "/jobs", "/stats"];

export default defineConfig({
  server: {
    proxy: Object.fromEntries(apiPaths.map((p) => [p, API])),
  },
  test: {
    projects: [
      {
        test: {
          name: "unit",
          environment: "happy-dom",
          include: ["tests/unit/**/*.test.ts"],
        },
      },
      {
        test: {
          name: "smoke",
          environment: "happy-dom",
          include: ["tests/smoke/**/*.test.ts"],
          globalSetup: ["./tests/smoke/global-setup.ts"],
          testTimeout: 60_000,
          hookTimeout: 180_000,
          fileParallelism: false,
        },
      },
    ],
  },
});
