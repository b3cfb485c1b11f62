/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const explore_truth: (a: number, b: number) => [number, number];
export const policy_calculator: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
export const simulate_and_estimate: (a: number, b: number, c: number, d: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
