/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const odmr_fit: (a: number, b: number, c: number, d: number) => [number, number];
export const stability_map: (a: number, b: number, c: number) => [number, number];
export const thermal_curve: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
