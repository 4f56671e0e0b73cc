import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: { url: "http://127.0.0.1:8452" },
    },
    testTimeout: 30_000,
    hookTimeout: 120_000,
    include: ["tests/**/*.test.ts"],
  },
});
